#pragma once

#include <string>

#include "pairlab/corpus.hpp"

namespace pairlab::test {

inline std::string data_path(const std::string& rel) { return std::string(PAIRLAB_TEST_DATA) + "/" + rel; }

/// "Nice keyboard , battery and screen work ok ." with its three gold triplets.
inline Sentence paper_sentence() {
    return parse_dataset_line(
        "Nice keyboard , battery and screen work ok .####[([1], [0], 'POS'), ([3], [7], 'NEU'), ([5], [7], 'NEU')]");
}

inline SynthSpec two_by_two(std::size_t sentences, Split split = Split::train) {
    SynthSpec spec;
    spec.vocab_size = 200;
    spec.sentences = sentences;
    spec.min_aspects = spec.max_aspects = 2;
    spec.min_opinions = spec.max_opinions = 2;
    spec.split = split;
    return spec;
}

} // namespace pairlab::test
