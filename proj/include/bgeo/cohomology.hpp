// Betti-number arithmetic for b-cohomology, H(M) + H(Z) shifted by one, and
// the Poisson cohomology of b-Poisson manifolds it computes.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bgeo {

class CohomologyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BettiData {
    int dim = 0;
    std::vector<int> betti_M;                  // b_0 .. b_dim of M
    std::vector<std::vector<int>> components;  // b_0 .. b_{dim-1} of each component of Z

    /// Throws CohomologyError on malformed lengths or negative entries.
    void validate() const;
    /// Poincare-duality mismatches, for closed orientable inputs.
    std::vector<std::string> warnings() const;
};

std::vector<int> b_betti(const BettiData& data);
std::vector<int> poisson_betti(const BettiData& data);

struct WitnessCheck {
    std::string name;
    bool ok = false;
    std::string detail;
};

struct WitnessReport {
    bool consistent = false;
    std::vector<WitnessCheck> checks;
};

/// Necessary conditions for (M, Z) to carry a b-symplectic structure.
WitnessReport nonvanishing_witness(const BettiData& data);

std::vector<int> sphere_betti(int n);
std::vector<int> torus_betti(int n);
std::vector<int> surface_betti(int genus);
/// Kunneth product of two Betti sequences.
std::vector<int> product_betti(const std::vector<int>& a, const std::vector<int>& b);

/// Parses "1,0,1" into integers.
std::vector<int> parse_betti(const std::string& text);

}  // namespace bgeo
