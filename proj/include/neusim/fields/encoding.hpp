#pragma once

#include "neusim/ad/tape.hpp"
#include "neusim/core/types.hpp"

#include <vector>

namespace neusim::fields {

// Octave-spaced sinusoidal features of a 3D point:
//   enc(p) = [p, sin(2^0 p), cos(2^0 p), ..., sin(2^{L-1} p), cos(2^{L-1} p)]
// Output dimension is 3*(1 + 2L). Deterministic, defined for all finite p.
struct FrequencyEncoding {
    int bands = 6;

    int dim() const { return 3 * (1 + 2 * bands); }

    // Rows of P are points; returns one encoded row per point.
    MatX encode(const MatX& P) const;

    // Tape variant; P is any [n,3]-valued node, gradients flow through.
    ad::Var encode(ad::Tape& t, ad::Var P) const;

    // Tangent rule: columns of the encoding Jacobian contracted with a
    // constant tangent direction d (one per point row). Plain version returns
    // d(enc)/dp · d; the tape version does the same symbolically.
    MatX encode_tangent(const MatX& P, const Vec3& d) const;
    ad::Var encode_tangent(ad::Tape& t, ad::Var P, const Vec3& d) const;
};

} // namespace neusim::fields
