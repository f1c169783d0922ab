// Random expression and form generators shared by the property tests.
#pragma once

#include "bgeo/forms.hpp"

#include <random>

namespace bgeo::testing {

class RandomExpr {
public:
    RandomExpr(const Patch& patch, std::uint64_t seed) : patch_(patch), rng_(seed) {}

    std::mt19937_64& rng() { return rng_; }

    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    Expr leaf() {
        if (uniform_int(0, 2) == 0) return Expr::rational(uniform_int(-5, 5), uniform_int(1, 4));
        return patch_.symbol(static_cast<std::size_t>(uniform_int(0, static_cast<int>(patch_.dim()) - 1)));
    }

    // Smooth everywhere: no division or log.
    Expr smooth(int depth) {
        if (depth <= 0) return leaf();
        switch (uniform_int(0, 5)) {
            case 0: return smooth(depth - 1) + smooth(depth - 1);
            case 1: return smooth(depth - 1) * smooth(depth - 1);
            case 2: return pow(smooth(depth - 1), Expr::integer(uniform_int(2, 3)));
            case 3: return sin(smooth(depth - 1));
            case 4: return cos(smooth(depth - 1));
            default: return exp(Expr::rational(1, 4) * smooth(depth - 1));
        }
    }

    // May contain quotients bounded away from poles and logs of positive args.
    Expr general(int depth) {
        if (depth <= 0) return leaf();
        switch (uniform_int(0, 3)) {
            case 0: return general(depth - 1) / (Expr::integer(2) + sin(general(depth - 1)));
            case 1: return log(Expr::integer(2) + cos(general(depth - 1)));
            case 2: return general(depth - 1) - general(depth - 1);
            default: return smooth(depth);
        }
    }

    std::vector<double> point() {
        std::vector<double> x;
        for (const auto& c : patch_.coords()) {
            double span = c.hi - c.lo;
            x.push_back(std::uniform_real_distribution<double>(c.lo + 0.05 * span, c.hi - 0.05 * span)(rng_));
        }
        return x;
    }

    Bindings bindings(const std::vector<double>& x) {
        Bindings b;
        for (std::size_t i = 0; i < x.size(); ++i) b[patch_.coord(i).name] = x[i];
        return b;
    }

    SmoothForm form(int degree, int depth) {
        SmoothForm w(patch_, degree);
        for (const auto& idx : basis_indices(patch_.dim(), degree)) {
            if (uniform_int(0, 2) == 0) continue;
            w.accumulate(idx, smooth(depth));
        }
        return w;
    }

private:
    Patch patch_;
    std::mt19937_64 rng_;
};

inline Patch box_patch(std::initializer_list<const char*> names, double lo = -1.0, double hi = 1.0) {
    std::vector<Coordinate> cs;
    for (const char* n : names) cs.push_back(Coordinate{n, lo, hi, std::nullopt});
    return Patch(cs);
}

}  // namespace bgeo::testing
