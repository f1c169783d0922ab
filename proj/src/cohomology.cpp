#include "bgeo/cohomology.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <fmt/format.h>

#include <algorithm>

namespace bgeo {

void BettiData::validate() const {
    if (dim < 1) throw CohomologyError("dimension must be at least 1");
    if (betti_M.size() != static_cast<std::size_t>(dim) + 1) {
        throw CohomologyError(fmt::format("M needs {} Betti numbers, got {}", dim + 1, betti_M.size()));
    }
    for (int b : betti_M)
        if (b < 0) throw CohomologyError("Betti numbers must be nonnegative");
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (components[i].size() != static_cast<std::size_t>(dim)) {
            throw CohomologyError(fmt::format("Z component {} needs {} Betti numbers, got {}", i, dim, components[i].size()));
        }
        for (int b : components[i])
            if (b < 0) throw CohomologyError("Betti numbers must be nonnegative");
    }
}

std::vector<std::string> BettiData::warnings() const {
    std::vector<std::string> out;
    auto check = [&](const std::vector<int>& b, const std::string& what) {
        const std::size_t top = b.size() - 1;
        for (std::size_t k = 0; k < b.size() / 2; ++k) {
            if (b[k] != b[top - k]) {
                out.push_back(fmt::format("{}: b_{} = {} but b_{} = {} (Poincare duality fails for closed orientable input)",
                                          what, k, b[k], top - k, b[top - k]));
            }
        }
    };
    check(betti_M, "M");
    for (std::size_t i = 0; i < components.size(); ++i) check(components[i], fmt::format("Z component {}", i));
    return out;
}

std::vector<int> b_betti(const BettiData& data) {
    data.validate();
    std::vector<int> out(data.betti_M);
    for (const auto& z : data.components) {
        for (int k = 1; k <= data.dim; ++k) out[static_cast<std::size_t>(k)] += z[static_cast<std::size_t>(k - 1)];
    }
    return out;
}

std::vector<int> poisson_betti(const BettiData& data) { return b_betti(data); }

WitnessReport nonvanishing_witness(const BettiData& data) {
    data.validate();
    WitnessReport rep;
    auto bb = b_betti(data);
    auto add = [&](std::string name, bool ok, std::string detail) {
        rep.checks.push_back(WitnessCheck{std::move(name), ok, std::move(detail)});
    };
    if (data.dim >= 2) add("b_b2 >= 1", bb[2] >= 1, fmt::format("b_b2 = {}", bb[2]));
    if (data.dim >= 4) add("b_b3 >= 1", bb[3] >= 1, fmt::format("b_b3 = {}", bb[3]));
    for (std::size_t i = 0; i < data.components.size(); ++i) {
        const auto& z = data.components[i];
        if (data.dim >= 2) add(fmt::format("b1(Z_{}) >= 1", i), z[1] >= 1, fmt::format("b1 = {}", z[1]));
        if (data.dim >= 4) add(fmt::format("b2(Z_{}) >= 1", i), z[2] >= 1, fmt::format("b2 = {}", z[2]));
    }
    rep.consistent = std::all_of(rep.checks.begin(), rep.checks.end(), [](const auto& c) { return c.ok; });
    return rep;
}

std::vector<int> sphere_betti(int n) {
    if (n < 1) throw CohomologyError("sphere dimension must be at least 1");
    std::vector<int> b(static_cast<std::size_t>(n) + 1, 0);
    b.front() = 1;
    b.back() = 1;
    return b;
}

std::vector<int> torus_betti(int n) {
    if (n < 1) throw CohomologyError("torus dimension must be at least 1");
    std::vector<int> b{1};
    for (int i = 0; i < n; ++i) b = product_betti(b, {1, 1});
    return b;
}

std::vector<int> surface_betti(int genus) {
    if (genus < 0) throw CohomologyError("genus must be nonnegative");
    return {1, 2 * genus, 1};
}

std::vector<int> product_betti(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty() || b.empty()) throw CohomologyError("empty Betti sequence");
    std::vector<int> out(a.size() + b.size() - 1, 0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

std::vector<int> parse_betti(const std::string& text) {
    std::vector<std::string> parts;
    boost::split(parts, text, boost::is_any_of(","));
    std::vector<int> out;
    for (auto& p : parts) {
        boost::trim(p);
        try {
            out.push_back(boost::lexical_cast<int>(p));
        } catch (const boost::bad_lexical_cast&) {
            throw CohomologyError("not an integer list: '" + text + "'");
        }
    }
    return out;
}

}  // namespace bgeo
