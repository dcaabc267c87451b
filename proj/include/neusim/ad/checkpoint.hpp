#pragma once

#include "neusim/ad/param_store.hpp"

#include <string>

namespace neusim::ad {

// Binary parameter snapshot. Layout (all integers little-endian u32, values
// little-endian f64):
//   "NPCK" | version=1 | count | count x { name_len | name | rank | dims... | values... }
// Entries are written in lexicographic name order; round-trips are bit-exact.
void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

} // namespace neusim::ad
