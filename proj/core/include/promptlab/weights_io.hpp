#pragma once

#include "promptlab/transformer.hpp"

#include <filesystem>
#include <string>

namespace plab {

// Weight file: UTF-8 JSON with top-level fields
//   d, h, s, s_prime, d_ff, l, masked_default, layers
// where each layer is
//   { "heads": [ {"W_q": [[...]], "W_k": ..., "W_v": ..., "W_o": ...}, ... ],
//     "W_1": [[...]], "W_2": [[...]], "b_1": [...], "b_2": [...] }
// Matrices are arrays of rows. Numbers are written with the shortest decimal
// form that round-trips, so save/load is bit-exact. The 1/sqrt(s) attention
// scale is not applied at runtime; store W_k already scaled.
std::string weights_to_json(const TransformerWeights& w);
TransformerWeights weights_from_json(const std::string& text);

void save_weights(const TransformerWeights& w, const std::filesystem::path& path);
TransformerWeights load_weights(const std::filesystem::path& path);

} // namespace plab
