#include "bgeo/forms.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <set>

namespace bgeo {

// ---------------------------------------------------------------- indices

std::vector<Index> basis_indices(std::size_t n, int k) {
    std::vector<Index> out;
    if (k < 0 || static_cast<std::size_t>(k) > n) return out;
    Index cur(static_cast<std::size_t>(k));
    std::iota(cur.begin(), cur.end(), 0);
    for (;;) {
        out.push_back(cur);
        int i = k - 1;
        while (i >= 0 && cur[static_cast<std::size_t>(i)] == static_cast<int>(n) - k + i) --i;
        if (i < 0) break;
        ++cur[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
    }
    return out;
}

namespace {

// Sorts idx in place; returns the permutation sign, or 0 on a repeated index.
int sort_with_sign(Index& idx) {
    int sign = 1;
    for (std::size_t i = 1; i < idx.size(); ++i) {
        for (std::size_t j = i; j > 0 && idx[j - 1] > idx[j]; --j) {
            std::swap(idx[j - 1], idx[j]);
            sign = -sign;
        }
    }
    for (std::size_t i = 1; i < idx.size(); ++i) {
        if (idx[i] == idx[i - 1]) return 0;
    }
    return sign;
}

void require_same_patch(const Patch& a, const Patch& b) {
    if (!(a == b)) throw FormError("forms live on different patches");
}

}  // namespace

// ---------------------------------------------------------------- SmoothForm

SmoothForm::SmoothForm(Patch patch, int degree) : patch_(std::move(patch)), degree_(degree) {
    if (degree < -1) throw FormError("negative form degree");
}

SmoothForm SmoothForm::function(const Patch& patch, const Expr& value) {
    SmoothForm w(patch, 0);
    w.accumulate({}, value);
    return w;
}

SmoothForm SmoothForm::differential(const Patch& patch, std::size_t coord) {
    SmoothForm w(patch, 1);
    w.accumulate({static_cast<int>(coord)}, Expr::integer(1));
    return w;
}

SmoothForm SmoothForm::basis(const Patch& patch, const Index& idx, const Expr& coeff) {
    SmoothForm w(patch, static_cast<int>(idx.size()));
    w.accumulate(idx, coeff);
    return w;
}

Expr SmoothForm::coeff(const Index& idx) const {
    auto it = coeffs_.find(idx);
    return it == coeffs_.end() ? Expr::integer(0) : it->second;
}

void SmoothForm::accumulate(const Index& idx_in, const Expr& c) {
    if (static_cast<int>(idx_in.size()) != degree_) throw FormError("index length does not match form degree");
    Index idx = idx_in;
    for (int i : idx) {
        if (i < 0 || static_cast<std::size_t>(i) >= patch_.dim()) throw FormError("coordinate index out of range");
    }
    int sign = sort_with_sign(idx);
    if (sign == 0) return;
    Expr term = sign > 0 ? normalize(c) : neg(c);
    if (term.is_zero()) return;
    auto it = coeffs_.find(idx);
    if (it == coeffs_.end()) {
        coeffs_.emplace(idx, term);
        return;
    }
    it->second = it->second + term;
    if (it->second.is_zero()) coeffs_.erase(it);
}

SmoothForm SmoothForm::operator+(const SmoothForm& o) const {
    require_same_patch(patch_, o.patch_);
    if (degree_ != o.degree_) throw FormError("adding forms of different degree");
    SmoothForm r = *this;
    for (const auto& [idx, c] : o.coeffs_) r.accumulate(idx, c);
    return r;
}

SmoothForm SmoothForm::operator-() const { return scaled(Expr::integer(-1)); }

SmoothForm SmoothForm::operator-(const SmoothForm& o) const { return *this + (-o); }

SmoothForm SmoothForm::scaled(const Expr& s) const {
    SmoothForm r(patch_, degree_);
    for (const auto& [idx, c] : coeffs_) r.accumulate(idx, c * s);
    return r;
}

std::vector<double> SmoothForm::values(std::span<const double> x, const Bindings& params) const {
    auto basis = basis_indices(patch_.dim(), degree_);
    std::vector<double> out(basis.size(), 0.0);
    for (std::size_t i = 0; i < basis.size(); ++i) {
        auto it = coeffs_.find(basis[i]);
        if (it != coeffs_.end()) out[i] = CompiledExpr(it->second, patch_, params)(x);
    }
    return out;
}

std::string SmoothForm::str() const {
    if (coeffs_.empty()) return "0";
    std::string s;
    for (const auto& [idx, c] : coeffs_) {
        if (!s.empty()) s += " + ";
        s += "(" + c.str() + ")";
        for (int i : idx) s += " d" + patch_.coord(static_cast<std::size_t>(i)).name;
    }
    return s;
}

SmoothForm wedge(const SmoothForm& a, const SmoothForm& b) {
    require_same_patch(a.patch(), b.patch());
    SmoothForm r(a.patch(), a.degree() + b.degree());
    for (const auto& [i, ca] : a.coeffs()) {
        for (const auto& [j, cb] : b.coeffs()) {
            Index k = i;
            k.insert(k.end(), j.begin(), j.end());
            r.accumulate(k, ca * cb);
        }
    }
    return r;
}

SmoothForm d(const SmoothForm& w) {
    SmoothForm r(w.patch(), w.degree() + 1);
    if (w.degree() < 0) return r;
    for (const auto& [idx, c] : w.coeffs()) {
        for (std::size_t i = 0; i < w.patch().dim(); ++i) {
            Expr dc = diff_expr(c, w.patch().coord(i).name);
            if (dc.is_zero()) continue;
            Index k{static_cast<int>(i)};
            k.insert(k.end(), idx.begin(), idx.end());
            if (static_cast<std::size_t>(r.degree()) <= w.patch().dim()) r.accumulate(k, dc);
        }
    }
    return r;
}

SmoothForm interior(const std::vector<Expr>& v, const SmoothForm& w) {
    if (v.size() != w.patch().dim()) throw FormError("vector field dimension mismatch");
    SmoothForm r(w.patch(), w.degree() - 1);
    if (w.degree() <= 0) return r;
    for (const auto& [idx, c] : w.coeffs()) {
        for (std::size_t m = 0; m < idx.size(); ++m) {
            Index rest = idx;
            rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(m));
            Expr term = c * v[static_cast<std::size_t>(idx[m])];
            r.accumulate(rest, (m % 2 == 0) ? term : neg(term));
        }
    }
    return r;
}

SmoothForm pullback(const SmoothForm& w, const Patch& source, const std::vector<Expr>& map) {
    const Patch& target = w.patch();
    if (map.size() != target.dim()) throw FormError("pullback map has wrong number of components");
    std::map<std::string, Expr> subs;
    for (std::size_t a = 0; a < target.dim(); ++a) subs.emplace(target.coord(a).name, map[a]);
    std::vector<SmoothForm> dF;
    for (std::size_t a = 0; a < target.dim(); ++a) {
        SmoothForm da(source, 1);
        for (std::size_t b = 0; b < source.dim(); ++b) {
            da.accumulate({static_cast<int>(b)}, diff_expr(map[a], source.coord(b).name));
        }
        dF.push_back(std::move(da));
    }
    SmoothForm r(source, w.degree());
    for (const auto& [idx, c] : w.coeffs()) {
        SmoothForm term = SmoothForm::function(source, substitute(c, subs));
        for (int i : idx) term = wedge(term, dF[static_cast<std::size_t>(i)]);
        r = r + term;
    }
    return r;
}

bool forms_equiv(const SmoothForm& a, const SmoothForm& b, const EquivOptions& opts) {
    if (a.degree() != b.degree()) return false;
    std::set<Index> keys;
    for (const auto& [k, v] : a.coeffs()) keys.insert(k);
    for (const auto& [k, v] : b.coeffs()) keys.insert(k);
    for (const auto& k : keys) {
        if (!expr_equiv(a.coeff(k), b.coeff(k), a.patch(), opts)) return false;
    }
    return true;
}

bool form_is_zero(const SmoothForm& a, const EquivOptions& opts) {
    for (const auto& [k, c] : a.coeffs()) {
        if (!is_zero_expr(c, a.patch(), opts)) return false;
    }
    return true;
}

// ---------------------------------------------------------------- BForm

BForm::BForm(SmoothForm alpha, SmoothForm beta, Expr f) : alpha_(std::move(alpha)), beta_(std::move(beta)), f_(normalize(f)) {
    if (alpha_.degree() != beta_.degree() - 1) throw FormError("b-form parts have inconsistent degrees");
    require_same_patch(alpha_.patch(), beta_.patch());
}

BForm BForm::from_smooth(const SmoothForm& beta, const Expr& f) {
    return BForm(SmoothForm(beta.patch(), beta.degree() - 1), beta, f);
}

namespace {

void require_same_f(const Expr& a, const Expr& b, const Patch& patch) {
    if (a == b) return;
    if (!expr_equiv(a, b, patch)) throw FormError("b-forms use different defining functions");
}

SmoothForm dlog(const Expr& h, const Patch& patch) {
    SmoothForm r(patch, 1);
    for (std::size_t i = 0; i < patch.dim(); ++i) r.accumulate({static_cast<int>(i)}, diff_expr(h, patch.coord(i).name) / h);
    return r;
}

}  // namespace

BForm BForm::operator+(const BForm& o) const {
    require_same_f(f_, o.f_, patch());
    return BForm(alpha_ + o.alpha_, beta_ + o.beta_, f_);
}

BForm BForm::operator-(const BForm& o) const {
    require_same_f(f_, o.f_, patch());
    return BForm(alpha_ - o.alpha_, beta_ - o.beta_, f_);
}

BForm BForm::scaled(const Expr& s) const { return BForm(alpha_.scaled(s), beta_.scaled(s), f_); }

BForm BForm::with_defining_factor(const Expr& h) const {
    // df/f = d(fh)/(fh) - dh/h
    return BForm(alpha_, beta_ - wedge(alpha_, dlog(h, patch())), f_ * h);
}

SmoothForm BForm::times_f() const {
    SmoothForm df(patch(), 1);
    for (std::size_t i = 0; i < patch().dim(); ++i) df.accumulate({static_cast<int>(i)}, diff_expr(f_, patch().coord(i).name));
    return wedge(alpha_, df) + beta_.scaled(f_);
}

std::string BForm::str() const {
    return "(" + alpha_.str() + ") ^ d(" + f_.str() + ")/(" + f_.str() + ") + " + beta_.str();
}

BForm wedge(const BForm& a, const BForm& b) {
    require_same_patch(a.patch(), b.patch());
    require_same_f(a.f(), b.f(), a.patch());
    int k2 = b.degree();
    SmoothForm t1 = wedge(a.alpha(), b.beta());
    if (k2 % 2 != 0) t1 = -t1;
    SmoothForm alpha = t1 + wedge(a.beta(), b.alpha());
    return BForm(alpha, wedge(a.beta(), b.beta()), a.f());
}

BForm wedge(const BForm& a, const SmoothForm& b) { return wedge(a, BForm::from_smooth(b, a.f())); }
BForm wedge(const SmoothForm& a, const BForm& b) { return wedge(BForm::from_smooth(a, b.f()), b); }

BForm d(const BForm& w) { return BForm(d(w.alpha()), d(w.beta()), w.f()); }

BForm power(const BForm& w, int n) {
    if (n < 1) throw FormError("power needs n >= 1");
    BForm r = w;
    for (int i = 1; i < n; ++i) r = wedge(r, w);
    return r;
}

bool bforms_equiv(const BForm& a, const BForm& b, const EquivOptions& opts) {
    if (a.degree() != b.degree()) return false;
    // Representations differ by alpha ~ alpha + g df, so compare f * w.
    if (!expr_equiv(a.f(), b.f(), a.patch(), opts)) return false;
    return forms_equiv(a.times_f(), b.times_f(), opts);
}

// ---------------------------------------------------------------- grids

std::size_t Grid::size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size();
    return axes.empty() ? 0 : n;
}

std::vector<std::size_t> Grid::multi_index(std::size_t flat) const {
    std::vector<std::size_t> mi(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
        mi[a] = flat % axes[a].size();
        flat /= axes[a].size();
    }
    return mi;
}

std::size_t Grid::flat_index(const std::vector<std::size_t>& mi) const {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < axes.size(); ++a) flat = flat * axes[a].size() + mi[a];
    return flat;
}

std::vector<double> Grid::point(std::size_t flat) const {
    auto mi = multi_index(flat);
    std::vector<double> x(axes.size());
    for (std::size_t a = 0; a < axes.size(); ++a) x[a] = axes[a][mi[a]];
    return x;
}

Grid make_grid(const Patch& patch, const GridSpec& spec) {
    std::size_t dim = patch.dim();
    int n = std::max(spec.per_axis, 2);
    if (dim > 0) {
        while (n > 8 && std::pow(static_cast<double>(n), static_cast<double>(dim)) > static_cast<double>(spec.max_points)) --n;
    }
    Grid g;
    for (const auto& c : patch.coords()) {
        std::vector<double> axis(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            axis[static_cast<std::size_t>(i)] = c.period ? c.lo + *c.period * i / n : c.lo + (c.hi - c.lo) * i / (n - 1);
        }
        g.axes.push_back(std::move(axis));
    }
    return g;
}

// ---------------------------------------------------------------- transversality

namespace {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

double root_on_segment(const CompiledExpr& F, const std::vector<double>& a, const std::vector<double>& b, double fa, double fb) {
    std::vector<double> x(a.size());
    auto g = [&](double s) {
        for (std::size_t i = 0; i < a.size(); ++i) x[i] = a[i] + s * (b[i] - a[i]);
        return F.eval_nothrow(x);
    };
    boost::uintmax_t iters = 200;
    auto tol = [](double l, double r) { return std::abs(r - l) <= 1e-15; };
    try {
        auto [lo, hi] = boost::math::tools::toms748_solve(g, 0.0, 1.0, fa, fb, tol, iters);
        return 0.5 * (lo + hi);
    } catch (...) {
        return 0.5;
    }
}

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TransversalityReport transversality_check(const Expr& f, const Patch& patch, const GridSpec& spec, double delta_reg,
                                          const Bindings& params) {
    TransversalityReport rep;
    rep.delta_reg = delta_reg;
    const std::size_t dim = patch.dim();
    Grid grid = make_grid(patch, spec);
    rep.grid_per_axis = grid.per_axis();
    CompiledExpr F(f, patch, params);
    std::vector<CompiledExpr> dF;
    for (std::size_t i = 0; i < dim; ++i) dF.emplace_back(diff_expr(f, patch.coord(i).name), patch, params);
    auto grad_norm = [&](const std::vector<double>& x) {
        std::vector<double> g(dim);
        for (std::size_t i = 0; i < dim; ++i) g[i] = dF[i].eval_nothrow(x);
        return norm(g);
    };

    const std::size_t npts = grid.size();
    const std::size_t N = grid.axes.empty() ? 0 : grid.axes[0].size();
    std::vector<double> fv(npts);
    double scale = 0.0;
    std::size_t nan_count = 0;
    for (std::size_t p = 0; p < npts; ++p) {
        fv[p] = F.eval_nothrow(grid.point(p));
        if (std::isnan(fv[p])) {
            ++nan_count;
        } else {
            scale = std::max(scale, std::abs(fv[p]));
        }
    }
    if (nan_count > 0) rep.messages.push_back(fmt::format("{} grid points where f could not be evaluated", nan_count));
    scale = std::max(scale, 1.0);
    const double zero_tol = 1e-13 * scale;

    std::vector<bool> periodic(dim);
    for (std::size_t a = 0; a < dim; ++a) periodic[a] = patch.coord(a).period.has_value();

    // cells are indexed by their lower corner
    auto cell_valid = [&](std::vector<long>& c) {
        for (std::size_t a = 0; a < dim; ++a) {
            long n = static_cast<long>(N);
            if (periodic[a]) {
                c[a] = ((c[a] % n) + n) % n;
            } else if (c[a] < 0 || c[a] > n - 2) {
                return false;
            }
        }
        return true;
    };
    auto cell_flat = [&](const std::vector<long>& c) {
        std::size_t flat = 0;
        for (std::size_t a = 0; a < dim; ++a) flat = flat * N + static_cast<std::size_t>(c[a]);
        return flat;
    };
    std::size_t ncells = npts;
    std::vector<char> marked(ncells, 0);
    std::vector<std::pair<std::size_t, std::size_t>> zero_cells;  // (zero idx, cell)

    auto mark_around = [&](const std::vector<std::size_t>& v, std::optional<std::size_t> along, std::size_t zero_id) {
        // cells having vertex v (or the edge from v along `along`)
        std::size_t combos = std::size_t(1) << dim;
        for (std::size_t m = 0; m < combos; ++m) {
            std::vector<long> c(dim);
            bool skip = false;
            for (std::size_t a = 0; a < dim; ++a) {
                long off = (m >> a) & 1 ? -1 : 0;
                if (along && *along == a && off != 0) {
                    skip = true;
                    break;
                }
                c[a] = static_cast<long>(v[a]) + off;
            }
            if (skip || !cell_valid(c)) continue;
            std::size_t cf = cell_flat(c);
            marked[cf] = 1;
            zero_cells.emplace_back(zero_id, cf);
        }
    };

    double min_grad = std::numeric_limits<double>::infinity();
    auto record_zero = [&](const std::vector<double>& x) {
        rep.zeros.push_back(x);
        double g = grad_norm(x);
        min_grad = std::min(min_grad, g);
        return rep.zeros.size() - 1;
    };

    for (std::size_t p = 0; p < npts; ++p) {
        if (std::isnan(fv[p])) continue;
        auto mi = grid.multi_index(p);
        std::vector<double> x = grid.point(p);
        if (std::abs(fv[p]) <= zero_tol) {
            std::size_t id = record_zero(x);
            mark_around(mi, std::nullopt, id);
            continue;
        }
        for (std::size_t a = 0; a < dim; ++a) {
            auto nb = mi;
            std::vector<double> y = x;
            if (mi[a] + 1 < N) {
                nb[a] = mi[a] + 1;
                y[a] = grid.axes[a][nb[a]];
            } else if (periodic[a]) {
                nb[a] = 0;
                y[a] = patch.coord(a).lo + *patch.coord(a).period;
            } else {
                continue;
            }
            double fb = fv[grid.flat_index(nb)];
            if (std::isnan(fb) || std::abs(fb) <= zero_tol) continue;
            if ((fv[p] < 0) == (fb < 0)) continue;
            double s = root_on_segment(F, x, y, fv[p], fb);
            std::vector<double> z = x;
            z[a] = x[a] + s * (y[a] - x[a]);
            std::size_t id = record_zero(z);
            mark_around(mi, a, id);
        }
    }

    // Zeros that touch without a sign change on the grid.
    for (std::size_t a = 0; a < dim; ++a) {
        for (std::size_t p = 0; p < npts; ++p) {
            auto mi = grid.multi_index(p);
            if (mi[a] != 0) continue;
            std::vector<double> line(N);
            double line_max = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                mi[a] = i;
                line[i] = fv[grid.flat_index(mi)];
                if (!std::isnan(line[i])) line_max = std::max(line_max, std::abs(line[i]));
            }
            for (std::size_t i = 1; i + 1 < N; ++i) {
                double l = line[i - 1], c = line[i], r = line[i + 1];
                if (std::isnan(l) || std::isnan(c) || std::isnan(r)) continue;
                if (std::abs(c) <= zero_tol) continue;
                if ((l < 0) != (c < 0) || (r < 0) != (c < 0)) continue;
                if (!(std::abs(c) < std::abs(l) && std::abs(c) <= std::abs(r))) continue;
                if (std::abs(c) > 0.05 * line_max) continue;
                mi[a] = i;
                std::vector<double> x = grid.point(grid.flat_index(mi));
                auto g = [&](double t) {
                    std::vector<double> y = x;
                    y[a] = t;
                    return std::abs(F.eval_nothrow(y));
                };
                auto [tmin, fmin] = boost::math::tools::brent_find_minima(g, grid.axes[a][i - 1], grid.axes[a][i + 1], 52);
                if (fmin > 1e-10 * scale) continue;
                std::vector<double> z = x;
                z[a] = tmin;
                double gn = grad_norm(z);
                std::size_t id = record_zero(z);
                mark_around(mi, std::nullopt, id);
                if (gn <= delta_reg) {
                    rep.degenerate_zero = true;
                } else {
                    rep.grid_too_coarse = true;
                }
            }
        }
    }
    if (rep.degenerate_zero) rep.messages.push_back("zero of f with vanishing gradient (0 is not a regular value)");
    if (rep.grid_too_coarse) rep.messages.push_back("grid too coarse to bracket all roots; refine the grid");

    // connected components of marked cells
    UnionFind uf(ncells);
    for (std::size_t cf = 0; cf < ncells; ++cf) {
        if (!marked[cf]) continue;
        std::vector<long> c(dim);
        std::size_t rem = cf;
        for (std::size_t a = dim; a-- > 0;) {
            c[a] = static_cast<long>(rem % N);
            rem /= N;
        }
        for (std::size_t a = 0; a < dim; ++a) {
            auto nb = c;
            nb[a] += 1;
            if (!cell_valid(nb)) continue;
            std::size_t nf = cell_flat(nb);
            if (marked[nf]) uf.unite(cf, nf);
        }
    }
    std::map<std::size_t, std::size_t> comp_of_root;
    for (std::size_t cf = 0; cf < ncells; ++cf) {
        if (!marked[cf]) continue;
        std::size_t r = uf.find(cf);
        auto it = comp_of_root.find(r);
        if (it == comp_of_root.end()) {
            comp_of_root.emplace(r, rep.components.size());
            rep.components.push_back(ZeroComponent{});
            it = comp_of_root.find(r);
        }
        rep.components[it->second].cells += 1;
    }
    for (const auto& [zid, cf] : zero_cells) {
        auto& comp = rep.components[comp_of_root.at(uf.find(cf))];
        if (comp.sample.empty()) comp.sample = rep.zeros[zid];
    }

    rep.zero_points = rep.zeros.size();
    rep.nonempty = rep.zero_points > 0;
    rep.min_grad = rep.nonempty ? min_grad : 0.0;
    rep.regular = !rep.degenerate_zero && !rep.grid_too_coarse && nan_count == 0 && (!rep.nonempty || min_grad > delta_reg);
    if (!rep.nonempty) rep.messages.push_back("f has no zeros on the patch");
    return rep;
}

std::size_t anchor_coordinate(const Expr& f, const Patch& patch, const Bindings& params) {
    for (std::size_t j = 0; j < patch.dim(); ++j) {
        Expr dj = diff_expr(f, patch.coord(j).name);
        if (dj.is_const() && !dj.is_zero()) return j;
    }
    auto rep = transversality_check(f, patch, GridSpec{16, 4096}, 1e-6, params);
    std::vector<std::vector<double>> pts = rep.zeros;
    if (pts.empty()) {
        Grid g = make_grid(patch, GridSpec{8, 4096});
        for (std::size_t p = 0; p < g.size(); ++p) pts.push_back(g.point(p));
    }
    std::size_t best = 0;
    double best_val = -1.0;
    for (std::size_t j = 0; j < patch.dim(); ++j) {
        CompiledExpr dj(diff_expr(f, patch.coord(j).name), patch, params);
        double s = 0.0;
        for (const auto& x : pts) {
            double v = dj.eval_nothrow(x);
            if (!std::isnan(v)) s += std::abs(v);
        }
        if (s > best_val) {
            best_val = s;
            best = j;
        }
    }
    return best;
}

// ---------------------------------------------------------------- restriction

namespace {

bool nonvanishing_on_grid(const Expr& g, const Patch& patch, const Bindings& params) {
    if (auto v = g.const_value()) return *v != 0.0;
    CompiledExpr G(g, patch, params);
    Grid grid = make_grid(patch, GridSpec{16, 4096});
    int sign = 0;
    for (std::size_t p = 0; p < grid.size(); ++p) {
        double v = G.eval_nothrow(grid.point(p));
        if (std::isnan(v) || std::abs(v) < 1e-8) return false;
        int s = v > 0 ? 1 : -1;
        if (sign == 0) sign = s;
        if (s != sign) return false;
    }
    return true;
}

std::optional<ZGraph> affine_graph(const Expr& g, const Patch& patch, const Bindings& params) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < patch.dim(); ++j) {
        if (depends_on(g, patch.coord(j).name)) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        bool ca = diff_expr(g, patch.coord(a).name).is_const();
        bool cb = diff_expr(g, patch.coord(b).name).is_const();
        return ca && !cb;
    });
    for (std::size_t j : order) {
        const std::string& name = patch.coord(j).name;
        Expr a = diff_expr(g, name);
        if (depends_on(a, name)) continue;
        Expr b = substitute(g, name, Expr::integer(0));
        if (!expr_equiv(a * Expr::coord(name) + b, g, patch)) continue;
        if (!nonvanishing_on_grid(a, patch, params)) continue;
        return ZGraph{j, normalize(neg(b) / a), false};
    }
    return std::nullopt;
}

std::vector<double> roots_on_line(const CompiledExpr& G, std::vector<double> x, std::size_t j, const Coordinate& c) {
    const int samples = 256;
    std::vector<double> roots;
    auto eval_at = [&](double t) {
        x[j] = t;
        return G.eval_nothrow(x);
    };
    int last = c.period ? samples : samples - 1;
    double width = c.hi - c.lo;
    auto pos = [&](int i) { return c.period ? c.lo + width * i / samples : c.lo + width * i / (samples - 1); };
    double prev_t = pos(0);
    double prev = eval_at(prev_t);
    for (int i = 1; i <= last; ++i) {
        double t = pos(i);
        double v = eval_at(t);
        if (prev == 0.0) roots.push_back(prev_t);
        if (!std::isnan(prev) && !std::isnan(v) && prev != 0.0 && v != 0.0 && (prev < 0) != (v < 0)) {
            auto fn = [&](double s) { return eval_at(s); };
            boost::uintmax_t iters = 200;
            auto tol = [](double l, double r) { return std::abs(r - l) <= 4e-16 * std::max(1.0, std::abs(l)); };
            auto [lo, hi] = boost::math::tools::toms748_solve(fn, prev_t, t, prev, v, tol, iters);
            roots.push_back(0.5 * (lo + hi));
        }
        prev_t = t;
        prev = v;
    }
    if (!c.period && prev == 0.0) roots.push_back(prev_t);
    if (c.period) {
        for (double& r : roots) {
            if (r >= c.lo + *c.period - 1e-12) r -= *c.period;
        }
    }
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }), roots.end());
    return roots;
}

std::optional<std::vector<ZGraph>> constant_graphs(const Expr& g, const Patch& patch, const Bindings& params) {
    CompiledExpr G(g, patch, params);
    for (std::size_t j = 0; j < patch.dim(); ++j) {
        if (!depends_on(g, patch.coord(j).name)) continue;
        // lines: up to 5 samples in every other coordinate
        std::vector<std::vector<double>> others;
        for (std::size_t a = 0; a < patch.dim(); ++a) {
            const auto& c = patch.coord(a);
            std::vector<double> vals;
            if (a == j) {
                vals = {c.lo};
            } else {
                for (int i = 0; i < 5; ++i) vals.push_back(c.lo + (c.hi - c.lo) * (i + 0.5) / 5.0);
            }
            others.push_back(vals);
        }
        std::size_t total = 1;
        for (const auto& o : others) total *= o.size();
        std::optional<std::vector<double>> reference;
        bool consistent = true;
        for (std::size_t k = 0; k < total && consistent; ++k) {
            std::vector<double> x(patch.dim());
            std::size_t rem = k;
            for (std::size_t a = patch.dim(); a-- > 0;) {
                x[a] = others[a][rem % others[a].size()];
                rem /= others[a].size();
            }
            auto roots = roots_on_line(G, x, j, patch.coord(j));
            if (!reference) {
                reference = roots;
            } else if (roots.size() != reference->size()) {
                consistent = false;
            } else {
                for (std::size_t i = 0; i < roots.size(); ++i) {
                    if (std::abs(roots[i] - (*reference)[i]) > 1e-9) consistent = false;
                }
            }
        }
        if (!consistent || !reference) continue;
        std::vector<ZGraph> out;
        for (double r : *reference) out.push_back(ZGraph{j, Expr::real(r), true});
        return out;
    }
    return std::nullopt;
}

}  // namespace

std::vector<ZGraph> zero_set_graphs(const Expr& f, const Patch& patch, const Bindings& params) {
    Expr nf = normalize(f);
    std::vector<Expr> factors = nf.op() == Op::Mul ? nf.args() : std::vector<Expr>{nf};
    std::vector<ZGraph> out;
    for (const auto& g : factors) {
        if (g.is_const()) continue;
        if (nonvanishing_on_grid(g, patch, params)) continue;
        if (auto affine = affine_graph(g, patch, params)) {
            out.push_back(*affine);
            continue;
        }
        if (auto consts = constant_graphs(g, patch, params)) {
            out.insert(out.end(), consts->begin(), consts->end());
            continue;
        }
        throw FormError("Z = {" + g.str() + " = 0} is not expressible as a coordinate graph on the patch");
    }
    return out;
}

Patch z_patch_for(const Patch& patch, const ZGraph& g) {
    std::vector<Coordinate> cs;
    for (std::size_t a = 0; a < patch.dim(); ++a) {
        if (a != g.coord) cs.push_back(patch.coord(a));
    }
    return Patch(cs, patch.params());
}

SmoothForm restrict_form(const SmoothForm& w, const ZGraph& g, const Patch& z_patch) {
    std::vector<Expr> map;
    for (std::size_t a = 0; a < w.patch().dim(); ++a) {
        map.push_back(a == g.coord ? g.phi : Expr::coord(w.patch().coord(a).name));
    }
    return pullback(w, z_patch, map);
}

std::vector<RestrictionPair> restrict_to_Z(const BForm& w, const Bindings& params) {
    std::vector<RestrictionPair> out;
    for (const auto& g : zero_set_graphs(w.f(), w.patch(), params)) {
        Patch zp = z_patch_for(w.patch(), g);
        out.push_back(RestrictionPair{g, zp, restrict_form(w.alpha(), g, zp), restrict_form(w.beta(), g, zp)});
    }
    return out;
}

// ---------------------------------------------------------------- smoothness

SmoothnessResult is_smooth(const BForm& w, const Bindings& params) {
    SmoothnessResult res;
    if (w.alpha().is_structurally_zero()) {
        res.status = SmoothStatus::Smooth;
        res.form = w.beta();
        return res;
    }
    SmoothForm df(w.patch(), 1);
    for (std::size_t i = 0; i < w.patch().dim(); ++i) df.accumulate({static_cast<int>(i)}, diff_expr(w.f(), w.patch().coord(i).name));
    SmoothForm A = wedge(w.alpha(), df);
    if (form_is_zero(A)) {
        res.status = SmoothStatus::Smooth;
        res.form = w.beta();
        return res;
    }
    // alpha ^ df on Z decides smoothness
    auto rep = transversality_check(w.f(), w.patch(), GridSpec{24, 20000}, 1e-6, params);
    double max_on_z = 0.0;
    std::vector<CompiledExpr> comp;
    for (const auto& [idx, c] : A.coeffs()) comp.emplace_back(c, w.patch(), params);
    for (const auto& z : rep.zeros) {
        for (const auto& c : comp) max_on_z = std::max(max_on_z, std::abs(c.eval_nothrow(z)));
    }
    if (max_on_z > 1e-8) {
        res.status = SmoothStatus::NotSmooth;
        res.detail = fmt::format("alpha restricted to Z is nonzero (|alpha ^ df| up to {:.3e} on Z)", max_on_z);
        return res;
    }
    SmoothForm quotient(w.patch(), A.degree());
    for (const auto& [idx, c] : A.coeffs()) {
        auto q = exact_divide(c, w.f(), w.patch());
        if (!q) {
            res.status = SmoothStatus::Inconclusive;
            res.detail = "restriction vanishes numerically but symbolic division by f failed for coefficient " + c.str();
            return res;
        }
        quotient.accumulate(idx, *q);
    }
    res.status = SmoothStatus::Smooth;
    res.form = quotient + w.beta();
    return res;
}

// ---------------------------------------------------------------- nondegeneracy

NondegeneracyReport nondegeneracy_check(const BForm& w, const GridSpec& spec, const Bindings& params, double threshold) {
    const std::size_t dim = w.patch().dim();
    if (dim % 2 != 0) throw FormError("nondegeneracy check needs an even-dimensional patch");
    if (w.degree() != 2) throw FormError("nondegeneracy check needs a b-two-form");
    NondegeneracyReport rep;
    rep.threshold = threshold;
    BForm top = power(w, static_cast<int>(dim / 2));
    Index all(dim);
    std::iota(all.begin(), all.end(), 0);
    Expr tau = normalize(top.times_f().coeff(all));
    rep.top_coefficient = tau.str();
    Grid grid = make_grid(w.patch(), spec);
    rep.grid_per_axis = grid.per_axis();
    if (tau.is_const()) {
        rep.symbolic_verdict = tau.is_zero() ? "identically zero" : "nonzero constant";
        rep.min_abs = std::abs(*tau.const_value());
        rep.nondegenerate = !tau.is_zero();
        rep.samples = grid.size();
        if (grid.size() > 0) rep.argmin = grid.point(0);
        return rep;
    }
    rep.symbolic_verdict = "undecided";
    CompiledExpr T(tau, w.patch(), params);
    rep.min_abs = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < grid.size(); ++p) {
        auto x = grid.point(p);
        double v = T.eval_nothrow(x);
        ++rep.samples;
        if (std::isnan(v)) {
            ++rep.failed_evaluations;
            continue;
        }
        if (std::abs(v) < rep.min_abs) {
            rep.min_abs = std::abs(v);
            rep.argmin = x;
        }
    }
    rep.nondegenerate = rep.failed_evaluations == 0 && rep.min_abs > threshold;
    return rep;
}

// ---------------------------------------------------------------- b-frame

namespace {

// T: columns are b-frame vectors in coordinates.
std::vector<std::vector<Expr>> frame_transform(const Expr& f, const Patch& patch, std::size_t j) {
    const std::size_t n = patch.dim();
    std::vector<std::vector<Expr>> T(n, std::vector<Expr>(n, Expr::integer(0)));
    Expr fj = diff_expr(f, patch.coord(j).name);
    for (std::size_t a = 0; a < n; ++a) {
        if (a == j) {
            T[j][j] = f / fj;
        } else {
            T[a][a] = Expr::integer(1);
            T[j][a] = neg(diff_expr(f, patch.coord(a).name) / fj);
        }
    }
    return T;
}

Expr pfaffian4(const std::vector<std::vector<Expr>>& w) {
    return w[0][1] * w[2][3] - w[0][2] * w[1][3] + w[0][3] * w[1][2];
}

// -M^{-1} for antisymmetric M of size 2 or 4
std::vector<std::vector<Expr>> negative_inverse(const std::vector<std::vector<Expr>>& m) {
    const std::size_t n = m.size();
    std::vector<std::vector<Expr>> r(n, std::vector<Expr>(n, Expr::integer(0)));
    auto set = [&](std::size_t a, std::size_t b, const Expr& v) {
        r[a][b] = normalize(v);
        r[b][a] = neg(v);
    };
    if (n == 2) {
        set(0, 1, pow(m[0][1], Expr::integer(-1)));
        return r;
    }
    if (n == 4) {
        Expr inv_pf = pow(pfaffian4(m), Expr::integer(-1));
        set(0, 1, m[2][3] * inv_pf);
        set(0, 2, neg(m[1][3]) * inv_pf);
        set(0, 3, m[1][2] * inv_pf);
        set(1, 2, m[0][3] * inv_pf);
        set(1, 3, neg(m[0][2]) * inv_pf);
        set(2, 3, m[0][1] * inv_pf);
        return r;
    }
    throw FormError("symbolic dualization supports dimensions 2 and 4; use dualize_matrix pointwise");
}

double pfaffian_numeric(const Eigen::MatrixXd& w) {
    if (w.rows() == 2) return w(0, 1);
    if (w.rows() == 4) return w(0, 1) * w(2, 3) - w(0, 2) * w(1, 3) + w(0, 3) * w(1, 2);
    double det = w.determinant();
    return std::sqrt(std::abs(det));
}

}  // namespace

std::vector<std::vector<Expr>> bframe_matrix(const BForm& w, std::size_t j) {
    if (w.degree() != 2) throw FormError("b-frame matrix needs a b-two-form");
    const Patch& patch = w.patch();
    const std::size_t n = patch.dim();
    auto T = frame_transform(w.f(), patch, j);
    std::vector<std::vector<Expr>> B(n, std::vector<Expr>(n, Expr::integer(0)));
    for (const auto& [idx, c] : w.beta().coeffs()) {
        B[static_cast<std::size_t>(idx[0])][static_cast<std::size_t>(idx[1])] = c;
        B[static_cast<std::size_t>(idx[1])][static_cast<std::size_t>(idx[0])] = neg(c);
    }
    std::vector<Expr> alpha(n, Expr::integer(0));
    for (const auto& [idx, c] : w.alpha().coeffs()) alpha[static_cast<std::size_t>(idx[0])] = c;
    std::vector<Expr> alpha_b(n);
    for (std::size_t c = 0; c < n; ++c) {
        std::vector<Expr> terms;
        for (std::size_t a = 0; a < n; ++a) terms.push_back(T[a][c] * alpha[a]);
        alpha_b[c] = add(terms);
    }
    std::vector<std::vector<Expr>> W(n, std::vector<Expr>(n, Expr::integer(0)));
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t e = c + 1; e < n; ++e) {
            std::vector<Expr> terms;
            for (std::size_t a = 0; a < n; ++a) {
                if (T[a][c].is_zero()) continue;
                for (std::size_t b = 0; b < n; ++b) {
                    if (T[b][e].is_zero() || B[a][b].is_zero()) continue;
                    terms.push_back(T[a][c] * B[a][b] * T[b][e]);
                }
            }
            if (e == j) terms.push_back(alpha_b[c]);
            if (c == j) terms.push_back(neg(alpha_b[e]));
            Expr v = add(terms);
            W[c][e] = v;
            W[e][c] = neg(v);
        }
    }
    return W;
}

CompiledBForm2::CompiledBForm2(const BForm& w, const Bindings& params) : n_(w.patch().dim()) {
    if (w.degree() != 2) throw FormError("CompiledBForm2 needs a b-two-form");
    const Patch& patch = w.patch();
    f_ = CompiledExpr(w.f(), patch, params);
    alpha_.resize(n_);
    alpha_present_.assign(n_, false);
    beta_.assign(n_, std::vector<CompiledExpr>(n_));
    beta_present_.assign(n_, std::vector<bool>(n_, false));
    for (std::size_t i = 0; i < n_; ++i) df_.emplace_back(diff_expr(w.f(), patch.coord(i).name), patch, params);
    for (const auto& [idx, c] : w.alpha().coeffs()) {
        alpha_[static_cast<std::size_t>(idx[0])] = CompiledExpr(c, patch, params);
        alpha_present_[static_cast<std::size_t>(idx[0])] = true;
    }
    for (const auto& [idx, c] : w.beta().coeffs()) {
        auto a = static_cast<std::size_t>(idx[0]);
        auto b = static_cast<std::size_t>(idx[1]);
        beta_[a][b] = CompiledExpr(c, patch, params);
        beta_present_[a][b] = true;
    }
}

Eigen::VectorXd CompiledBForm2::grad_f(std::span<const double> x) const {
    Eigen::VectorXd g(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i) g(static_cast<Eigen::Index>(i)) = df_[i].eval_nothrow(x);
    return g;
}

Eigen::MatrixXd CompiledBForm2::frame(std::span<const double> x, int anchor) const {
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::VectorXd g = grad_f(x);
    Eigen::MatrixXd T = Eigen::MatrixXd::Identity(n, n);
    const auto j = static_cast<Eigen::Index>(anchor);
    double fj = g(j);
    for (Eigen::Index a = 0; a < n; ++a) {
        if (a == j) {
            T(j, j) = f(x) / fj;
        } else {
            T(j, a) = -g(a) / fj;
        }
    }
    return T;
}

Eigen::MatrixXd CompiledBForm2::matrix(std::span<const double> x, int anchor, int* used_anchor) const {
    const auto n = static_cast<Eigen::Index>(n_);
    if (anchor < 0) {
        Eigen::VectorXd g = grad_f(x);
        Eigen::Index best = 0;
        g.cwiseAbs().maxCoeff(&best);
        anchor = static_cast<int>(best);
    }
    if (used_anchor) *used_anchor = anchor;
    Eigen::MatrixXd T = frame(x, anchor);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    for (std::size_t a = 0; a < n_; ++a) {
        if (alpha_present_[a]) alpha(static_cast<Eigen::Index>(a)) = alpha_[a].eval_nothrow(x);
        for (std::size_t b = a + 1; b < n_; ++b) {
            if (!beta_present_[a][b]) continue;
            double v = beta_[a][b].eval_nothrow(x);
            B(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
            B(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = -v;
        }
    }
    Eigen::VectorXd ab = T.transpose() * alpha;
    Eigen::MatrixXd W = T.transpose() * B * T;
    Eigen::VectorXd ej = Eigen::VectorXd::Unit(n, anchor);
    W += ab * ej.transpose() - ej * ab.transpose();
    return W;
}

Eigen::MatrixXd CompiledBForm2::coordinate_matrix(std::span<const double> x) const {
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    for (std::size_t a = 0; a < n_; ++a) {
        if (alpha_present_[a]) alpha(static_cast<Eigen::Index>(a)) = alpha_[a].eval_nothrow(x);
        for (std::size_t b = a + 1; b < n_; ++b) {
            if (!beta_present_[a][b]) continue;
            double v = beta_[a][b].eval_nothrow(x);
            B(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
            B(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = -v;
        }
    }
    Eigen::VectorXd gl = grad_f(x) / f(x);
    return B + alpha * gl.transpose() - gl * alpha.transpose();
}

// ---------------------------------------------------------------- BMultivector

BMultivector::BMultivector(Patch patch, Expr f, std::size_t anchor, std::map<Index, Expr> coeffs)
    : patch_(std::move(patch)), f_(normalize(f)), anchor_(anchor), coeffs_(std::move(coeffs)) {
    if (anchor_ >= patch_.dim()) throw FormError("anchor coordinate out of range");
}

Expr BMultivector::coeff(const Index& idx) const {
    auto it = coeffs_.find(idx);
    return it == coeffs_.end() ? Expr::integer(0) : it->second;
}

std::map<Index, Expr> BMultivector::coordinate_components() const {
    const std::size_t n = patch_.dim();
    auto T = frame_transform(f_, patch_, anchor_);
    std::vector<std::vector<Expr>> P(n, std::vector<Expr>(n, Expr::integer(0)));
    for (const auto& [idx, c] : coeffs_) {
        P[static_cast<std::size_t>(idx[0])][static_cast<std::size_t>(idx[1])] = c;
        P[static_cast<std::size_t>(idx[1])][static_cast<std::size_t>(idx[0])] = neg(c);
    }
    std::map<Index, Expr> out;
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t e = c + 1; e < n; ++e) {
            std::vector<Expr> terms;
            for (std::size_t a = 0; a < n; ++a) {
                if (T[c][a].is_zero()) continue;
                for (std::size_t b = 0; b < n; ++b) {
                    if (T[e][b].is_zero() || P[a][b].is_zero()) continue;
                    terms.push_back(T[c][a] * P[a][b] * T[e][b]);
                }
            }
            Expr v = add(terms);
            if (!v.is_zero()) out.emplace(Index{static_cast<int>(c), static_cast<int>(e)}, v);
        }
    }
    return out;
}

Eigen::MatrixXd BMultivector::frame_matrix(std::span<const double> x, const Bindings& params) const {
    const auto n = static_cast<Eigen::Index>(patch_.dim());
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [idx, c] : coeffs_) {
        double v = CompiledExpr(c, patch_, params)(x);
        P(idx[0], idx[1]) = v;
        P(idx[1], idx[0]) = -v;
    }
    return P;
}

Eigen::MatrixXd dualize_matrix(const Eigen::MatrixXd& w) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(w);
    if (!lu.isInvertible()) throw FormError("rank deficiency: matrix is not invertible");
    return -lu.inverse();
}

namespace {

void check_rank_on_grid(const std::vector<std::vector<Expr>>& W, const Expr& f, const Patch& patch,
                        const DualizeOptions& opts, const Bindings& params) {
    const std::size_t n = W.size();
    std::vector<std::vector<CompiledExpr>> C(n, std::vector<CompiledExpr>(n));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) C[a][b] = CompiledExpr(W[a][b], patch, params);
    }
    Grid grid = make_grid(patch, opts.grid);
    std::vector<std::vector<double>> points;
    for (std::size_t p = 0; p < grid.size(); ++p) points.push_back(grid.point(p));
    // rank drops typically happen on Z, which a coarse grid can miss
    auto on_z = transversality_check(f, patch, opts.grid, 1e-6, params).zeros;
    points.insert(points.end(), on_z.begin(), on_z.end());
    for (const auto& x : points) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        bool ok = true;
        for (std::size_t a = 0; a < n && ok; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) {
                double v = C[a][b].eval_nothrow(x);
                if (std::isnan(v)) {
                    ok = false;
                    break;
                }
                M(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
                M(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = -v;
            }
        }
        if (!ok) continue;  // frame undefined where df/dx_anchor vanishes
        if (std::abs(pfaffian_numeric(M)) <= opts.rank_tol) {
            std::string pt;
            for (double v : x) pt += (pt.empty() ? "" : ", ") + fmt::format("{:.6g}", v);
            throw FormError("rank deficiency at sample point (" + pt + ")");
        }
    }
}

}  // namespace

BMultivector dualize(const BForm& w, const DualizeOptions& opts, const Bindings& params) {
    const std::size_t n = w.patch().dim();
    if (n != 2 && n != 4) throw FormError("symbolic dualization supports dimensions 2 and 4; use dualize_matrix pointwise");
    std::size_t j = opts.anchor ? *opts.anchor : anchor_coordinate(w.f(), w.patch(), params);
    auto W = bframe_matrix(w, j);
    check_rank_on_grid(W, w.f(), w.patch(), opts, params);
    auto P = negative_inverse(W);
    std::map<Index, Expr> coeffs;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            if (!P[a][b].is_zero()) coeffs.emplace(Index{static_cast<int>(a), static_cast<int>(b)}, P[a][b]);
        }
    }
    return BMultivector(w.patch(), w.f(), j, std::move(coeffs));
}

BForm dualize(const BMultivector& p, const DualizeOptions& opts, const Bindings& params) {
    const std::size_t n = p.patch().dim();
    std::vector<std::vector<Expr>> P(n, std::vector<Expr>(n, Expr::integer(0)));
    for (const auto& [idx, c] : p.coeffs()) {
        P[static_cast<std::size_t>(idx[0])][static_cast<std::size_t>(idx[1])] = c;
        P[static_cast<std::size_t>(idx[1])][static_cast<std::size_t>(idx[0])] = neg(c);
    }
    check_rank_on_grid(P, p.f(), p.patch(), opts, params);
    auto W = negative_inverse(P);
    const std::size_t j = p.anchor();
    SmoothForm alpha(p.patch(), 1), beta(p.patch(), 2);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            if (W[a][b].is_zero()) continue;
            if (b == j) {
                alpha.accumulate({static_cast<int>(a)}, W[a][b]);
            } else if (a == j) {
                alpha.accumulate({static_cast<int>(b)}, neg(W[a][b]));
            } else {
                beta.accumulate({static_cast<int>(a), static_cast<int>(b)}, W[a][b]);
            }
        }
    }
    return BForm(alpha, beta, p.f());
}

}  // namespace bgeo
