#include "bgeo/symexpr.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <functional>
#include <limits>
#include <numeric>
#include <set>

namespace bgeo {

// ---------------------------------------------------------------- Rational

namespace {

using i128 = __int128;

std::optional<Rational> make_checked(i128 n, i128 d) {
    if (d == 0) return std::nullopt;
    if (d < 0) {
        n = -n;
        d = -d;
    }
    i128 a = n < 0 ? -n : n;
    i128 b = d;
    while (b != 0) {
        i128 t = a % b;
        a = b;
        b = t;
    }
    if (a > 1) {
        n /= a;
        d /= a;
    }
    constexpr i128 lim = std::numeric_limits<std::int64_t>::max();
    if (n > lim || n < -lim || d > lim) return std::nullopt;
    return Rational(static_cast<std::int64_t>(n), static_cast<std::int64_t>(d));
}

}  // namespace

Rational::Rational(std::int64_t n, std::int64_t d) {
    if (d == 0) throw std::invalid_argument("Rational with zero denominator");
    if (d < 0) {
        n = -n;
        d = -d;
    }
    std::int64_t g = std::gcd(n, d);
    if (g > 1) {
        n /= g;
        d /= g;
    }
    num_ = n;
    den_ = d;
}

std::optional<Rational> Rational::add(const Rational& a, const Rational& b) {
    return make_checked(i128(a.num_) * b.den_ + i128(b.num_) * a.den_, i128(a.den_) * b.den_);
}

std::optional<Rational> Rational::mul(const Rational& a, const Rational& b) {
    return make_checked(i128(a.num_) * b.num_, i128(a.den_) * b.den_);
}

std::optional<Rational> Rational::negate() const { return make_checked(-i128(num_), den_); }

std::optional<Rational> Rational::inverse() const {
    if (num_ == 0) return std::nullopt;
    return make_checked(den_, num_);
}

std::optional<Rational> Rational::pow(const Rational& a, std::int64_t e) {
    if (e < 0) {
        auto inv = a.inverse();
        if (!inv) return std::nullopt;
        return pow(*inv, -e);
    }
    Rational result(1);
    Rational base = a;
    while (e > 0) {
        if (e & 1) {
            auto r = mul(result, base);
            if (!r) return std::nullopt;
            result = *r;
        }
        e >>= 1;
        if (e > 0) {
            auto b = mul(base, base);
            if (!b) return std::nullopt;
            base = *b;
        }
    }
    return result;
}

std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    return i128(a.num_) * b.den_ <=> i128(b.num_) * a.den_;
}

std::string Rational::str() const {
    if (den_ == 1) return std::to_string(num_);
    return std::to_string(num_) + "/" + std::to_string(den_);
}

// ---------------------------------------------------------------- Number

Number operator+(const Number& a, const Number& b) {
    if (a.exact && b.exact) {
        if (auto r = Rational::add(a.q, b.q)) return Number::rational(*r);
    }
    return Number::real(a.value() + b.value());
}

Number operator*(const Number& a, const Number& b) {
    if (a.exact && b.exact) {
        if (auto r = Rational::mul(a.q, b.q)) return Number::rational(*r);
    }
    // exact zero annihilates floats too
    if ((a.exact && a.q.is_zero()) || (b.exact && b.q.is_zero())) return Number::rational(Rational(0));
    return Number::real(a.value() * b.value());
}

Number Number::operator-() const {
    if (exact) {
        if (auto r = q.negate()) return Number::rational(*r);
    }
    return Number::real(-value());
}

std::string Number::str() const {
    if (exact) return q.str();
    return fmt::format("{:.16e}", d);
}

// ---------------------------------------------------------------- Expr core

namespace {

std::size_t hash_combine(std::size_t seed, std::size_t v) {
    return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

std::shared_ptr<const Node> make_node(Op op, Number num, std::string name, std::vector<Expr> args) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->num = num;
    n->name = std::move(name);
    n->args = std::move(args);
    std::size_t h = std::hash<int>{}(static_cast<int>(op));
    if (op == Op::Const) {
        h = hash_combine(h, std::hash<double>{}(num.value()));
        h = hash_combine(h, num.exact ? 1 : 0);
    }
    if (!n->name.empty()) h = hash_combine(h, std::hash<std::string>{}(n->name));
    for (const auto& a : n->args) h = hash_combine(h, a.hash());
    n->hash = h;
    return n;
}

int op_rank(Op op) {
    switch (op) {
        case Op::Const: return 0;
        case Op::Param: return 1;
        case Op::Coord: return 2;
        case Op::Pow: return 3;
        case Op::Mul: return 4;
        case Op::Add: return 5;
        case Op::Neg: return 6;
        case Op::Abs: return 7;
        case Op::Cos: return 8;
        case Op::Exp: return 9;
        case Op::Log: return 10;
        case Op::Sin: return 11;
    }
    return 12;
}

const Expr& zero_expr() {
    static const Expr z = Expr::integer(0);
    return z;
}

}  // namespace

Expr::Expr() : node_(make_node(Op::Const, Number::rational(Rational(0)), {}, {})) {}

Expr Expr::constant(Number n) { return Expr(make_node(Op::Const, n, {}, {})); }
Expr Expr::coord(const std::string& name) { return Expr(make_node(Op::Coord, {}, name, {})); }
Expr Expr::param(const std::string& name) { return Expr(make_node(Op::Param, {}, name, {})); }
Expr Expr::raw(Op op, std::vector<Expr> args) { return Expr(make_node(op, {}, {}, std::move(args))); }

Op Expr::op() const noexcept { return node_->op; }
const std::vector<Expr>& Expr::args() const noexcept { return node_->args; }
const std::string& Expr::name() const noexcept { return node_->name; }
const Number& Expr::number() const noexcept { return node_->num; }
std::size_t Expr::hash() const noexcept { return node_->hash; }

std::optional<double> Expr::const_value() const {
    if (!is_const()) return std::nullopt;
    return number().value();
}

int Expr::compare(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return 0;
    int ra = op_rank(a.op()), rb = op_rank(b.op());
    if (ra != rb) return ra < rb ? -1 : 1;
    switch (a.op()) {
        case Op::Const: {
            const Number& x = a.number();
            const Number& y = b.number();
            if (x.exact != y.exact) return x.exact ? -1 : 1;
            if (x.exact) {
                auto c = x.q <=> y.q;
                return c < 0 ? -1 : (c > 0 ? 1 : 0);
            }
            if (x.d == y.d) return 0;
            return x.d < y.d ? -1 : 1;
        }
        case Op::Coord:
        case Op::Param: {
            int c = a.name().compare(b.name());
            return c < 0 ? -1 : (c > 0 ? 1 : 0);
        }
        default: {
            const auto& x = a.args();
            const auto& y = b.args();
            std::size_t n = std::min(x.size(), y.size());
            for (std::size_t i = 0; i < n; ++i) {
                int c = compare(x[i], y[i]);
                if (c != 0) return c;
            }
            if (x.size() != y.size()) return x.size() < y.size() ? -1 : 1;
            return 0;
        }
    }
}

bool operator==(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return true;
    if (a.hash() != b.hash()) return false;
    return Expr::compare(a, b) == 0;
}

// ---------------------------------------------------------------- normalization

namespace {

std::pair<Number, Expr> split_coefficient(const Expr& term) {
    if (term.is_const()) return {term.number(), Expr::integer(1)};
    if (term.op() == Op::Mul && term.args().front().is_const()) {
        const auto& args = term.args();
        Number c = args.front().number();
        if (args.size() == 2) return {c, args[1]};
        return {c, Expr::raw(Op::Mul, std::vector<Expr>(args.begin() + 1, args.end()))};
    }
    return {Number::rational(Rational(1)), term};
}

// Builds coefficient * rest where rest is already a normalized non-sum term.
Expr scaled_term(const Number& c, const Expr& rest) {
    if (c.is_zero()) return zero_expr();
    if (rest.is_one()) return Expr::constant(c);
    if (c.is_one()) return rest;
    std::vector<Expr> args{Expr::constant(c)};
    if (rest.op() == Op::Mul) {
        args.insert(args.end(), rest.args().begin(), rest.args().end());
    } else {
        args.push_back(rest);
    }
    return Expr::raw(Op::Mul, std::move(args));
}

std::vector<Expr> factors_of(const Expr& rest) {
    if (rest.is_one()) return {};
    if (rest.op() == Op::Mul) return rest.args();
    return {rest};
}

Expr product_of(std::vector<Expr> fs) {
    if (fs.empty()) return Expr::integer(1);
    if (fs.size() == 1) return fs.front();
    std::sort(fs.begin(), fs.end());
    return Expr::raw(Op::Mul, std::move(fs));
}

bool is_square_of(const Expr& f, Op fn, Expr* arg) {
    if (f.op() != Op::Pow) return false;
    const Expr& e = f.args()[1];
    if (!e.is_const() || !e.number().exact || e.number().q != Rational(2)) return false;
    if (f.args()[0].op() != fn) return false;
    *arg = f.args()[0].args()[0];
    return true;
}

// One application of c*r*sin(u)^2 + c*r*cos(u)^2 -> c*r; returns true when
// a pair was merged.
bool pythagorean_rewrite(std::map<Expr, Number>& terms, Number& constant) {
    for (auto it = terms.begin(); it != terms.end(); ++it) {
        auto fs = factors_of(it->first);
        for (std::size_t i = 0; i < fs.size(); ++i) {
            Expr u;
            if (!is_square_of(fs[i], Op::Sin, &u)) continue;
            auto partner_fs = fs;
            partner_fs[i] = pow(cos(u), Expr::integer(2));
            Expr partner = product_of(partner_fs);
            auto jt = terms.find(partner);
            if (jt == terms.end()) continue;
            const Number& ca = it->second;
            const Number& cb = jt->second;
            if (!(ca.exact && cb.exact && ca.q == cb.q) && !(ca.value() == cb.value())) continue;
            Number c = ca;
            auto rest_fs = fs;
            rest_fs.erase(rest_fs.begin() + static_cast<std::ptrdiff_t>(i));
            Expr rest = product_of(rest_fs);
            terms.erase(jt);
            terms.erase(it);
            if (rest.is_one()) {
                constant = constant + c;
            } else {
                auto [k, r] = split_coefficient(rest);
                terms[r] = terms.count(r) ? terms[r] + c * k : c * k;
            }
            return true;
        }
    }
    return false;
}

}  // namespace

Expr add(std::vector<Expr> in) {
    std::vector<Expr> flat;
    flat.reserve(in.size());
    for (auto& t : in) {
        if (t.op() == Op::Add) {
            flat.insert(flat.end(), t.args().begin(), t.args().end());
        } else {
            flat.push_back(std::move(t));
        }
    }
    Number constant = Number::rational(Rational(0));
    std::map<Expr, Number> terms;
    for (const auto& t : flat) {
        if (t.is_const()) {
            constant = constant + t.number();
            continue;
        }
        auto [c, r] = split_coefficient(t);
        auto it = terms.find(r);
        if (it == terms.end()) {
            terms.emplace(r, c);
        } else {
            it->second = it->second + c;
        }
    }
    std::erase_if(terms, [](const auto& kv) { return kv.second.is_zero(); });
    while (pythagorean_rewrite(terms, constant)) {
        std::erase_if(terms, [](const auto& kv) { return kv.second.is_zero(); });
    }
    std::vector<Expr> out;
    if (!constant.is_zero()) out.push_back(Expr::constant(constant));
    for (const auto& [r, c] : terms) out.push_back(scaled_term(c, r));
    if (out.empty()) return zero_expr();
    if (out.size() == 1) return out.front();
    return Expr::raw(Op::Add, std::move(out));
}

Expr mul(std::vector<Expr> in) {
    Number c = Number::rational(Rational(1));
    std::map<Expr, std::vector<Expr>> powers;
    std::vector<Expr> stack(in.rbegin(), in.rend());
    while (!stack.empty()) {
        Expr f = stack.back();
        stack.pop_back();
        switch (f.op()) {
            case Op::Const: c = c * f.number(); break;
            case Op::Mul:
                for (auto it = f.args().rbegin(); it != f.args().rend(); ++it) stack.push_back(*it);
                break;
            case Op::Neg:
                c = -c;
                stack.push_back(f.args()[0]);
                break;
            case Op::Pow: powers[f.args()[0]].push_back(f.args()[1]); break;
            default: powers[f].push_back(Expr::integer(1)); break;
        }
    }
    if (c.is_zero() && c.exact) return zero_expr();
    std::vector<Expr> factors;
    bool needs_refold = false;
    for (auto& [base, exps] : powers) {
        Expr e = add(exps);
        if (e.is_zero()) continue;
        Expr p = pow(base, e);
        if (p.is_const() || p.op() == Op::Mul) needs_refold = true;
        factors.push_back(p);
    }
    if (needs_refold) {
        // pow() folded a constant or distributed over a product; one more pass
        // merges the pieces. Each pass removes at least one compound factor.
        std::vector<Expr> again{Expr::constant(c)};
        again.insert(again.end(), factors.begin(), factors.end());
        return mul(std::move(again));
    }
    std::sort(factors.begin(), factors.end());
    if (factors.empty()) return Expr::constant(c);
    if (factors.size() == 1 && factors[0].op() == Op::Add && !c.is_one()) {
        std::vector<Expr> terms;
        for (const auto& t : factors[0].args()) {
            auto [k, r] = split_coefficient(t);
            terms.push_back(scaled_term(c * k, r));
        }
        return add(std::move(terms));
    }
    if (c.is_one() && factors.size() == 1) return factors.front();
    std::vector<Expr> args;
    if (!c.is_one()) args.push_back(Expr::constant(c));
    args.insert(args.end(), factors.begin(), factors.end());
    return Expr::raw(Op::Mul, std::move(args));
}

namespace {

std::optional<std::int64_t> integer_value(const Expr& e) {
    if (!e.is_const() || !e.number().exact || !e.number().q.is_integer()) return std::nullopt;
    return e.number().q.num();
}

}  // namespace

Expr pow(const Expr& base, const Expr& exponent) {
    if (exponent.is_zero()) return Expr::integer(1);
    if (exponent.is_one()) return base;
    if (base.is_one()) return Expr::integer(1);
    if (base.is_const() && exponent.is_const()) {
        const Number& b = base.number();
        const Number& e = exponent.number();
        if (b.is_zero()) {
            if (e.value() > 0) return zero_expr();
            return Expr::raw(Op::Pow, {base, exponent});
        }
        if (b.exact && e.exact && e.q.is_integer()) {
            if (auto r = Rational::pow(b.q, e.q.num())) return Expr::constant(Number::rational(*r));
        }
        double bv = b.value(), ev = e.value();
        if (bv < 0 && std::floor(ev) != ev) return Expr::raw(Op::Pow, {base, exponent});
        return Expr::real(std::pow(bv, ev));
    }
    if (auto n = integer_value(exponent)) {
        if (base.op() == Op::Pow) {
            return pow(base.args()[0], mul({base.args()[1], exponent}));
        }
        if (base.op() == Op::Mul) {
            std::vector<Expr> fs;
            for (const auto& f : base.args()) fs.push_back(pow(f, exponent));
            return mul(std::move(fs));
        }
    }
    return Expr::raw(Op::Pow, {base, exponent});
}

Expr neg(const Expr& e) { return mul({Expr::integer(-1), e}); }

Expr sin(const Expr& e) {
    if (e.is_zero()) return zero_expr();
    if (e.is_const()) return Expr::real(std::sin(e.number().value()));
    return Expr::raw(Op::Sin, {e});
}

Expr cos(const Expr& e) {
    if (e.is_zero()) return Expr::integer(1);
    if (e.is_const()) return Expr::real(std::cos(e.number().value()));
    return Expr::raw(Op::Cos, {e});
}

Expr exp(const Expr& e) {
    if (e.is_zero()) return Expr::integer(1);
    if (e.is_const()) return Expr::real(std::exp(e.number().value()));
    return Expr::raw(Op::Exp, {e});
}

Expr log(const Expr& e) {
    if (e.is_one()) return zero_expr();
    if (e.is_const() && e.number().value() > 0) return Expr::real(std::log(e.number().value()));
    return Expr::raw(Op::Log, {e});
}

Expr abs(const Expr& e) {
    if (e.is_const()) {
        const Number& n = e.number();
        if (n.value() < 0) return Expr::constant(-n);
        return e;
    }
    if (e.op() == Op::Abs) return e;
    return Expr::raw(Op::Abs, {e});
}

Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return add({a, neg(b)}); }
Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }
Expr operator/(const Expr& a, const Expr& b) { return mul({a, pow(b, Expr::integer(-1))}); }
Expr operator-(const Expr& a) { return neg(a); }

Expr normalize(const Expr& e) {
    switch (e.op()) {
        case Op::Const:
        case Op::Coord:
        case Op::Param: return e;
        default: break;
    }
    std::vector<Expr> args;
    args.reserve(e.args().size());
    for (const auto& a : e.args()) args.push_back(normalize(a));
    switch (e.op()) {
        case Op::Add: return add(std::move(args));
        case Op::Mul: return mul(std::move(args));
        case Op::Pow: return pow(args[0], args[1]);
        case Op::Neg: return neg(args[0]);
        case Op::Sin: return sin(args[0]);
        case Op::Cos: return cos(args[0]);
        case Op::Exp: return exp(args[0]);
        case Op::Log: return log(args[0]);
        case Op::Abs: return abs(args[0]);
        default: return e;
    }
}

// ---------------------------------------------------------------- printing

namespace {

constexpr int kPrecAdd = 1;
constexpr int kPrecMul = 2;
constexpr int kPrecUnary = 3;
constexpr int kPrecPow = 4;
constexpr int kPrecAtom = 5;

std::string print(const Expr& e, int* prec);

std::string wrap(const Expr& e, int min_prec) {
    int p = 0;
    std::string s = print(e, &p);
    if (p < min_prec) return "(" + s + ")";
    return s;
}

bool negative_coefficient(const Expr& t) {
    auto [c, r] = split_coefficient(t);
    (void)r;
    return c.value() < 0;
}

std::string print(const Expr& e, int* prec) {
    switch (e.op()) {
        case Op::Const: {
            const Number& n = e.number();
            bool negative = n.value() < 0;
            if (n.exact && !n.q.is_integer()) {
                *prec = negative ? kPrecUnary - 1 : kPrecMul;
                return n.q.str();
            }
            *prec = negative ? kPrecUnary : kPrecAtom;
            return n.str();
        }
        case Op::Coord:
        case Op::Param: *prec = kPrecAtom; return e.name();
        case Op::Add: {
            std::string s;
            bool first = true;
            for (const auto& t : e.args()) {
                if (first) {
                    s = wrap(t, kPrecAdd);
                    first = false;
                } else if (negative_coefficient(t)) {
                    s += " - " + wrap(neg(t), kPrecMul);
                } else {
                    s += " + " + wrap(t, kPrecMul);
                }
            }
            *prec = kPrecAdd;
            return s;
        }
        case Op::Mul: {
            std::vector<std::string> numer, denom;
            bool minus = false;
            for (const auto& f : e.args()) {
                if (f.is_const() && f.number().exact) {
                    Rational q = f.number().q;
                    if (q.num() < 0) {
                        minus = !minus;
                        q = Rational(-q.num(), q.den());
                    }
                    if (q.num() != 1) numer.push_back(std::to_string(q.num()));
                    if (q.den() != 1) denom.push_back(std::to_string(q.den()));
                    continue;
                }
                if (f.op() == Op::Pow && f.args()[1].is_const() && f.args()[1].number().value() < 0) {
                    Expr inv = pow(f.args()[0], neg(f.args()[1]));
                    denom.push_back(wrap(inv, kPrecPow));
                    continue;
                }
                numer.push_back(wrap(f, kPrecUnary));
            }
            std::string s;
            if (numer.empty()) numer.push_back("1");
            for (std::size_t i = 0; i < numer.size(); ++i) s += (i ? "*" : "") + numer[i];
            if (denom.size() == 1) {
                s += "/" + denom[0];
            } else if (denom.size() > 1) {
                std::string d;
                for (std::size_t i = 0; i < denom.size(); ++i) d += (i ? "*" : "") + denom[i];
                s += "/(" + d + ")";
            }
            if (minus) {
                *prec = kPrecMul;
                return "-" + s;
            }
            *prec = kPrecMul;
            return s;
        }
        case Op::Pow: {
            std::string b = wrap(e.args()[0], kPrecAtom);
            const Expr& x = e.args()[1];
            int p = 0;
            std::string xs = print(x, &p);
            bool simple = p == kPrecAtom && !(x.is_const() && x.number().value() < 0);
            *prec = kPrecPow;
            return b + "^" + (simple ? xs : "(" + xs + ")");
        }
        case Op::Neg: *prec = kPrecUnary; return "-" + wrap(e.args()[0], kPrecUnary);
        case Op::Sin: *prec = kPrecAtom; return "sin(" + e.args()[0].str() + ")";
        case Op::Cos: *prec = kPrecAtom; return "cos(" + e.args()[0].str() + ")";
        case Op::Exp: *prec = kPrecAtom; return "exp(" + e.args()[0].str() + ")";
        case Op::Log: *prec = kPrecAtom; return "log(" + e.args()[0].str() + ")";
        case Op::Abs: *prec = kPrecAtom; return "abs(" + e.args()[0].str() + ")";
    }
    return "?";
}

}  // namespace

std::string Expr::str() const {
    int p = 0;
    return print(*this, &p);
}

// ---------------------------------------------------------------- Patch

Patch::Patch(std::vector<Coordinate> coords, std::vector<std::string> params)
    : coords_(std::move(coords)), params_(std::move(params)) {
    std::set<std::string> seen;
    for (auto& c : coords_) {
        if (c.name.empty()) throw std::invalid_argument("empty coordinate name");
        if (!seen.insert(c.name).second) throw std::invalid_argument("duplicate coordinate name '" + c.name + "'");
        if (c.period) {
            if (!(*c.period > 0)) throw std::invalid_argument("periodic coordinate '" + c.name + "' needs positive period");
            c.hi = c.lo + *c.period;
        }
        if (!(c.lo < c.hi)) throw std::invalid_argument("empty interval for coordinate '" + c.name + "'");
    }
    for (const auto& p : params_) {
        if (!seen.insert(p).second) throw std::invalid_argument("parameter '" + p + "' clashes with another symbol");
    }
}

std::optional<std::size_t> Patch::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < coords_.size(); ++i) {
        if (coords_[i].name == name) return i;
    }
    return std::nullopt;
}

std::optional<std::size_t> Patch::param_index(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i] == name) return i;
    }
    return std::nullopt;
}

bool operator==(const Patch& a, const Patch& b) {
    if (a.coords_.size() != b.coords_.size() || a.params_ != b.params_) return false;
    for (std::size_t i = 0; i < a.coords_.size(); ++i) {
        const auto& x = a.coords_[i];
        const auto& y = b.coords_[i];
        if (x.name != y.name || x.lo != y.lo || x.hi != y.hi || x.period != y.period) return false;
    }
    return true;
}

// ---------------------------------------------------------------- parser

namespace {

class Parser {
public:
    Parser(const std::string& text, const Patch& patch) : s_(text), patch_(patch) {}

    Expr parse() {
        Expr e = expression();
        skip_ws();
        if (pos_ != s_.size()) throw ParseError(std::string("unexpected '") + s_[pos_] + "'", pos_);
        return e;
    }

private:
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr expression() {
        Expr lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = Expr::raw(Op::Add, {lhs, term()});
            } else if (accept('-')) {
                lhs = Expr::raw(Op::Add, {lhs, Expr::raw(Op::Neg, {term()})});
            } else {
                return lhs;
            }
        }
    }

    Expr term() {
        Expr lhs = unary();
        for (;;) {
            if (accept('*')) {
                lhs = Expr::raw(Op::Mul, {lhs, unary()});
            } else if (accept('/')) {
                lhs = Expr::raw(Op::Mul, {lhs, Expr::raw(Op::Pow, {unary(), Expr::integer(-1)})});
            } else {
                return lhs;
            }
        }
    }

    Expr unary() {
        if (accept('-')) return Expr::raw(Op::Neg, {unary()});
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (accept('^')) return Expr::raw(Op::Pow, {base, unary()});
        return base;
    }

    Expr number() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        std::size_t dot = std::string::npos;
        if (pos_ < s_.size() && s_[pos_] == '.') {
            dot = pos_;
            ++pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        }
        bool has_exponent = false;
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
            if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
                has_exponent = true;
            } else {
                pos_ = save;
            }
        }
        std::string lit = s_.substr(start, pos_ - start);
        if (lit == "." || lit.empty()) throw ParseError("malformed number", start);
        if (!has_exponent) {
            std::string digits = lit;
            std::int64_t scale = 1;
            bool fits = true;
            if (dot != std::string::npos) {
                std::size_t frac = pos_ - dot - 1;
                digits.erase(dot - start, 1);
                if (frac > 18) fits = false;
                for (std::size_t i = 0; i < frac && fits; ++i) scale *= 10;
            }
            std::int64_t value = 0;
            if (fits && !digits.empty()) {
                auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
                fits = ec == std::errc() && p == digits.data() + digits.size();
            }
            if (fits) return Expr::rational(value, scale);
        }
        double v = 0.0;
        auto [p, ec] = std::from_chars(lit.data(), lit.data() + lit.size(), v);
        if (ec != std::errc()) throw ParseError("malformed number", start);
        return Expr::real(v);
    }

    Expr primary() {
        skip_ws();
        if (pos_ >= s_.size()) throw ParseError("unexpected end of input", pos_);
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = expression();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            std::string id = s_.substr(start, pos_ - start);
            static const std::map<std::string, Op> functions{
                {"sin", Op::Sin}, {"cos", Op::Cos}, {"exp", Op::Exp}, {"log", Op::Log}, {"abs", Op::Abs}};
            auto fn = functions.find(id);
            if (fn != functions.end()) {
                skip_ws();
                if (pos_ < s_.size() && s_[pos_] == '(') {
                    ++pos_;
                    Expr arg = expression();
                    if (!accept(')')) throw ParseError("expected ')'", pos_);
                    return Expr::raw(fn->second, {arg});
                }
            }
            if (patch_.is_coordinate(id)) return Expr::coord(id);
            if (patch_.is_param(id)) return Expr::param(id);
            throw ParseError("unknown identifier '" + id + "'", start);
        }
        throw ParseError(std::string("unexpected '") + c + "'", pos_);
    }

    const std::string& s_;
    const Patch& patch_;
    std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(const std::string& text, const Patch& patch) { return Parser(text, patch).parse(); }

// ---------------------------------------------------------------- evaluation

namespace {

double checked(double v, const char* what) {
    if (!std::isfinite(v)) throw EvalError(EvalError::Kind::NonFinite, std::string("non-finite value in ") + what);
    return v;
}

double eval_pow(double b, double e) {
    if (b == 0.0 && e < 0) throw EvalError(EvalError::Kind::Pole, "pole: division by zero");
    if (b < 0 && std::floor(e) != e) throw EvalError(EvalError::Kind::Domain, "negative base with fractional exponent");
    return checked(std::pow(b, e), "pow");
}

double eval_rec(const Expr& e, const Bindings& point, const Bindings& params) {
    switch (e.op()) {
        case Op::Const: return e.number().value();
        case Op::Coord:
        case Op::Param: {
            auto it = point.find(e.name());
            if (it != point.end()) return it->second;
            it = params.find(e.name());
            if (it != params.end()) return it->second;
            throw EvalError(EvalError::Kind::Unbound, "unbound symbol '" + e.name() + "'");
        }
        case Op::Add: {
            double s = 0.0;
            for (const auto& a : e.args()) s += eval_rec(a, point, params);
            return checked(s, "sum");
        }
        case Op::Mul: {
            double p = 1.0;
            for (const auto& a : e.args()) p *= eval_rec(a, point, params);
            return checked(p, "product");
        }
        case Op::Pow: return eval_pow(eval_rec(e.args()[0], point, params), eval_rec(e.args()[1], point, params));
        case Op::Neg: return -eval_rec(e.args()[0], point, params);
        case Op::Sin: return std::sin(eval_rec(e.args()[0], point, params));
        case Op::Cos: return std::cos(eval_rec(e.args()[0], point, params));
        case Op::Exp: return checked(std::exp(eval_rec(e.args()[0], point, params)), "exp");
        case Op::Log: {
            double x = eval_rec(e.args()[0], point, params);
            if (x == 0.0) throw EvalError(EvalError::Kind::Pole, "pole: log(0)");
            if (x < 0.0) throw EvalError(EvalError::Kind::Domain, "log of negative value");
            return std::log(x);
        }
        case Op::Abs: return std::abs(eval_rec(e.args()[0], point, params));
    }
    return 0.0;
}

}  // namespace

double eval_expr(const Expr& e, const Bindings& point, const Bindings& params) {
    return checked(eval_rec(e, point, params), "expression");
}

// ---------------------------------------------------------------- symbols

namespace {

void collect_symbols(const Expr& e, std::set<std::string>& out) {
    if (e.op() == Op::Coord || e.op() == Op::Param) {
        out.insert(e.name());
        return;
    }
    for (const auto& a : e.args()) collect_symbols(a, out);
}

}  // namespace

bool depends_on(const Expr& e, const std::string& name) {
    if (e.op() == Op::Coord || e.op() == Op::Param) return e.name() == name;
    for (const auto& a : e.args()) {
        if (depends_on(a, name)) return true;
    }
    return false;
}

std::vector<std::string> free_symbols(const Expr& e) {
    std::set<std::string> s;
    collect_symbols(e, s);
    return {s.begin(), s.end()};
}

// ---------------------------------------------------------------- differentiation

Expr diff_expr(const Expr& e, const std::string& var) {
    if (!depends_on(e, var)) return Expr::integer(0);
    const auto& a = e.args();
    switch (e.op()) {
        case Op::Const: return Expr::integer(0);
        case Op::Param:
        case Op::Coord: return Expr::integer(e.name() == var ? 1 : 0);
        case Op::Add: {
            std::vector<Expr> ds;
            for (const auto& t : a) ds.push_back(diff_expr(t, var));
            return add(std::move(ds));
        }
        case Op::Mul: {
            std::vector<Expr> terms;
            for (std::size_t i = 0; i < a.size(); ++i) {
                Expr di = diff_expr(a[i], var);
                if (di.is_zero()) continue;
                std::vector<Expr> fs;
                for (std::size_t j = 0; j < a.size(); ++j) fs.push_back(j == i ? di : a[j]);
                terms.push_back(mul(std::move(fs)));
            }
            return add(std::move(terms));
        }
        case Op::Pow: {
            const Expr& b = a[0];
            const Expr& x = a[1];
            if (!depends_on(x, var)) {
                return mul({x, pow(b, x - Expr::integer(1)), diff_expr(b, var)});
            }
            return mul({pow(b, x), add({mul({diff_expr(x, var), log(b)}), mul({x, diff_expr(b, var), pow(b, Expr::integer(-1))})})});
        }
        case Op::Neg: return neg(diff_expr(a[0], var));
        case Op::Sin: return mul({cos(a[0]), diff_expr(a[0], var)});
        case Op::Cos: return neg(mul({sin(a[0]), diff_expr(a[0], var)}));
        case Op::Exp: return mul({exp(a[0]), diff_expr(a[0], var)});
        case Op::Log: {
            const Expr& u = a[0].op() == Op::Abs ? a[0].args()[0] : a[0];
            return diff_expr(u, var) / u;
        }
        case Op::Abs: return mul({a[0], pow(abs(a[0]), Expr::integer(-1)), diff_expr(a[0], var)});
    }
    return Expr::integer(0);
}

Expr substitute(const Expr& e, const std::map<std::string, Expr>& values) {
    if (e.op() == Op::Coord || e.op() == Op::Param) {
        auto it = values.find(e.name());
        return it == values.end() ? e : it->second;
    }
    if (e.args().empty()) return e;
    std::vector<Expr> args;
    for (const auto& a : e.args()) args.push_back(substitute(a, values));
    return normalize(Expr::raw(e.op(), std::move(args)));
}

Expr substitute(const Expr& e, const std::string& name, const Expr& value) {
    return substitute(e, std::map<std::string, Expr>{{name, value}});
}

// ---------------------------------------------------------------- polynomials

namespace {

using Monomial = std::vector<int>;

struct Poly {
    std::map<Monomial, Rational> terms;
};

std::optional<Poly> poly_add(const Poly& a, const Poly& b) {
    Poly r = a;
    for (const auto& [m, c] : b.terms) {
        auto it = r.terms.find(m);
        if (it == r.terms.end()) {
            r.terms.emplace(m, c);
        } else {
            auto s = Rational::add(it->second, c);
            if (!s) return std::nullopt;
            if (s->is_zero()) {
                r.terms.erase(it);
            } else {
                it->second = *s;
            }
        }
    }
    return r;
}

std::optional<Poly> poly_mul(const Poly& a, const Poly& b) {
    Poly r;
    for (const auto& [ma, ca] : a.terms) {
        for (const auto& [mb, cb] : b.terms) {
            Monomial m(ma.size());
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = ma[i] + mb[i];
            auto p = Rational::mul(ca, cb);
            if (!p) return std::nullopt;
            Poly t;
            t.terms.emplace(m, *p);
            auto s = poly_add(r, t);
            if (!s) return std::nullopt;
            r = std::move(*s);
        }
    }
    return r;
}

std::optional<Poly> to_poly(const Expr& e, const std::vector<std::string>& vars) {
    switch (e.op()) {
        case Op::Const: {
            if (!e.number().exact) return std::nullopt;
            Poly p;
            if (!e.number().is_zero()) p.terms.emplace(Monomial(vars.size(), 0), e.number().q);
            return p;
        }
        case Op::Coord:
        case Op::Param: {
            auto it = std::find(vars.begin(), vars.end(), e.name());
            if (it == vars.end()) return std::nullopt;
            Monomial m(vars.size(), 0);
            m[static_cast<std::size_t>(it - vars.begin())] = 1;
            Poly p;
            p.terms.emplace(m, Rational(1));
            return p;
        }
        case Op::Add: {
            Poly acc;
            for (const auto& a : e.args()) {
                auto t = to_poly(a, vars);
                if (!t) return std::nullopt;
                auto s = poly_add(acc, *t);
                if (!s) return std::nullopt;
                acc = std::move(*s);
            }
            return acc;
        }
        case Op::Mul: {
            Poly acc;
            acc.terms.emplace(Monomial(vars.size(), 0), Rational(1));
            for (const auto& a : e.args()) {
                auto t = to_poly(a, vars);
                if (!t) return std::nullopt;
                auto s = poly_mul(acc, *t);
                if (!s) return std::nullopt;
                acc = std::move(*s);
            }
            return acc;
        }
        case Op::Neg: {
            auto t = to_poly(e.args()[0], vars);
            if (!t) return std::nullopt;
            for (auto& [m, c] : t->terms) {
                auto n = c.negate();
                if (!n) return std::nullopt;
                c = *n;
            }
            return t;
        }
        case Op::Pow: {
            auto n = integer_value(e.args()[1]);
            if (!n || *n < 0 || *n > 64) return std::nullopt;
            auto b = to_poly(e.args()[0], vars);
            if (!b) return std::nullopt;
            Poly acc;
            acc.terms.emplace(Monomial(vars.size(), 0), Rational(1));
            for (std::int64_t i = 0; i < *n; ++i) {
                auto s = poly_mul(acc, *b);
                if (!s) return std::nullopt;
                acc = std::move(*s);
            }
            return acc;
        }
        default: return std::nullopt;
    }
}

}  // namespace

// ---------------------------------------------------------------- equivalence

namespace {

double sample_coordinate(const Patch& patch, const std::string& name, std::mt19937_64& rng) {
    auto idx = patch.index_of(name);
    if (!idx) return std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    const auto& c = patch.coord(*idx);
    double margin = 1e-3 * (c.hi - c.lo);
    return std::uniform_real_distribution<double>(c.lo + margin, c.hi - margin)(rng);
}

}  // namespace

namespace {
std::atomic<std::uint64_t> g_equiv_seed{20240601};
}  // namespace

std::uint64_t default_equiv_seed() noexcept { return g_equiv_seed.load(); }
void set_default_equiv_seed(std::uint64_t seed) noexcept { g_equiv_seed.store(seed); }

bool expr_equiv(const Expr& a, const Expr& b, const Patch& patch, const EquivOptions& opts) {
    Expr na = normalize(a);
    Expr nb = normalize(b);
    if (na == nb) return true;
    Expr diff = normalize(na - nb);
    if (diff.is_zero()) return true;
    if (diff.is_const()) return false;
    {
        std::set<std::string> syms;
        collect_symbols(na, syms);
        collect_symbols(nb, syms);
        std::vector<std::string> vars(syms.begin(), syms.end());
        auto pa = to_poly(na, vars);
        auto pb = to_poly(nb, vars);
        if (pa && pb) return pa->terms == pb->terms;
    }
    std::set<std::string> syms;
    collect_symbols(na, syms);
    collect_symbols(nb, syms);
    std::mt19937_64 rng(opts.seed);
    int accepted = 0;
    int attempts = 0;
    const int max_attempts = 20 * opts.samples;
    while (accepted < opts.samples && attempts < max_attempts) {
        ++attempts;
        Bindings point;
        for (const auto& s : syms) {
            auto fixed = opts.fixed_params.find(s);
            if (fixed != opts.fixed_params.end()) {
                point[s] = fixed->second;
            } else if (patch.is_param(s) && !patch.is_coordinate(s)) {
                point[s] = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
            } else {
                point[s] = sample_coordinate(patch, s, rng);
            }
        }
        double va = 0.0, vb = 0.0;
        try {
            va = eval_expr(na, point);
            vb = eval_expr(nb, point);
        } catch (const EvalError&) {
            continue;
        }
        double scale = std::max({1.0, std::abs(va), std::abs(vb)});
        if (std::abs(va - vb) > opts.rel_tol * scale) return false;
        ++accepted;
    }
    return accepted > 0;
}

bool is_zero_expr(const Expr& e, const Patch& patch, const EquivOptions& opts) {
    Expr n = normalize(e);
    if (n.is_zero()) return true;
    if (n.is_const()) return false;
    return expr_equiv(n, Expr::integer(0), patch, opts);
}

// ---------------------------------------------------------------- expansion

Expr expand(const Expr& e) {
    switch (e.op()) {
        case Op::Add: {
            std::vector<Expr> ts;
            for (const auto& a : e.args()) ts.push_back(expand(a));
            return add(std::move(ts));
        }
        case Op::Neg: return neg(expand(e.args()[0]));
        case Op::Mul: {
            std::vector<Expr> acc{Expr::integer(1)};
            for (const auto& a : e.args()) {
                Expr x = expand(a);
                std::vector<Expr> parts = x.op() == Op::Add ? x.args() : std::vector<Expr>{x};
                std::vector<Expr> next;
                next.reserve(acc.size() * parts.size());
                for (const auto& l : acc) {
                    for (const auto& r : parts) next.push_back(mul({l, r}));
                }
                if (next.size() > 4096) return normalize(e);
                acc = std::move(next);
            }
            return add(std::move(acc));
        }
        case Op::Pow: {
            Expr b = expand(e.args()[0]);
            auto n = integer_value(e.args()[1]);
            if (b.op() == Op::Add && n && *n >= 2 && *n <= 12) {
                std::vector<Expr> fs(static_cast<std::size_t>(*n), b);
                return expand(Expr::raw(Op::Mul, std::move(fs)));
            }
            return pow(b, e.args()[1]);
        }
        default: return normalize(e);
    }
}

// ---------------------------------------------------------------- antiderivative

namespace {

// term = coefficient (free of var) * kernel; kernel depends on var.
bool split_var_factor(const Expr& term, const std::string& var, Number* c, std::vector<Expr>* free_part, Expr* kernel) {
    *c = Number::rational(Rational(1));
    free_part->clear();
    std::optional<Expr> k;
    std::vector<Expr> fs = term.op() == Op::Mul ? term.args() : std::vector<Expr>{term};
    for (const auto& f : fs) {
        if (f.is_const()) {
            *c = *c * f.number();
        } else if (depends_on(f, var)) {
            if (k) return false;
            k = f;
        } else {
            free_part->push_back(f);
        }
    }
    if (!k) return false;
    *kernel = *k;
    return true;
}

std::optional<Expr> integrate_kernel(const Expr& k, const std::string& var) {
    Expr x = Expr::coord(var);
    if (k.op() == Op::Coord && k.name() == var) return mul({Expr::rational(1, 2), pow(x, Expr::integer(2))});
    if (k.op() == Op::Pow && k.args()[0].op() == Op::Coord && k.args()[0].name() == var && !depends_on(k.args()[1], var)) {
        const Expr& n = k.args()[1];
        if (n.is_const() && n.number().value() == -1.0) return log(abs(x));
        Expr np1 = n + Expr::integer(1);
        return pow(x, np1) / np1;
    }
    if (k.op() == Op::Sin || k.op() == Op::Cos || k.op() == Op::Exp) {
        const Expr& u = k.args()[0];
        Expr du = diff_expr(u, var);
        if (!du.is_const() || du.is_zero()) return std::nullopt;
        Expr inv = pow(du, Expr::integer(-1));
        if (k.op() == Op::Sin) return mul({Expr::integer(-1), inv, cos(u)});
        if (k.op() == Op::Cos) return mul({inv, sin(u)});
        return mul({inv, exp(u)});
    }
    return std::nullopt;
}

}  // namespace

std::optional<Expr> antiderivative(const Expr& e, const std::string& var) {
    Expr n = normalize(e);
    if (!depends_on(n, var)) return mul({n, Expr::coord(var)});
    Expr x = expand(n);
    std::vector<Expr> terms = x.op() == Op::Add ? x.args() : std::vector<Expr>{x};
    std::vector<Expr> out;
    for (const auto& t : terms) {
        if (!depends_on(t, var)) {
            out.push_back(mul({t, Expr::coord(var)}));
            continue;
        }
        Number c;
        std::vector<Expr> free_part;
        Expr kernel;
        if (!split_var_factor(t, var, &c, &free_part, &kernel)) return std::nullopt;
        auto ik = integrate_kernel(kernel, var);
        if (!ik) return std::nullopt;
        free_part.push_back(Expr::constant(c));
        free_part.push_back(*ik);
        out.push_back(mul(std::move(free_part)));
    }
    return add(std::move(out));
}

// ---------------------------------------------------------------- exact division

namespace {

struct ExprPoly {
    std::map<Monomial, Expr> terms;  // coefficient free of the division variables
};

std::optional<ExprPoly> to_expr_poly(const Expr& e, const std::vector<std::string>& vars) {
    Expr x = expand(e);
    std::vector<Expr> terms = x.op() == Op::Add ? x.args() : std::vector<Expr>{x};
    ExprPoly p;
    for (const auto& t : terms) {
        if (t.is_zero()) continue;
        Monomial m(vars.size(), 0);
        std::vector<Expr> coeff;
        std::vector<Expr> fs = t.op() == Op::Mul ? t.args() : std::vector<Expr>{t};
        for (const auto& f : fs) {
            bool involves = false;
            for (const auto& v : vars) involves = involves || depends_on(f, v);
            if (!involves) {
                coeff.push_back(f);
                continue;
            }
            Expr base = f;
            std::int64_t k = 1;
            if (f.op() == Op::Pow) {
                auto n = integer_value(f.args()[1]);
                if (!n || *n < 0) return std::nullopt;
                base = f.args()[0];
                k = *n;
            }
            if (base.op() != Op::Coord && base.op() != Op::Param) return std::nullopt;
            auto it = std::find(vars.begin(), vars.end(), base.name());
            if (it == vars.end()) return std::nullopt;
            m[static_cast<std::size_t>(it - vars.begin())] += static_cast<int>(k);
        }
        Expr c = mul(std::move(coeff));
        auto it = p.terms.find(m);
        if (it == p.terms.end()) {
            p.terms.emplace(m, c);
        } else {
            it->second = it->second + c;
        }
    }
    std::erase_if(p.terms, [](const auto& kv) { return kv.second.is_zero(); });
    return p;
}

bool divides(const Monomial& a, const Monomial& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
    }
    return true;
}

}  // namespace

std::optional<Expr> exact_divide(const Expr& num, const Expr& den, const Patch& patch) {
    Expr d = normalize(den);
    if (d.is_zero()) return std::nullopt;
    if (d.is_const()) return normalize(num) / d;
    Expr direct = normalize(num) / d;
    // Direct cancellation succeeds when no negative power of a factor of den survives.
    {
        bool clean = true;
        std::vector<Expr> dfs = d.op() == Op::Mul ? d.args() : std::vector<Expr>{d};
        std::function<void(const Expr&)> scan = [&](const Expr& e) {
            if (e.op() == Op::Pow && e.args()[1].is_const() && e.args()[1].number().value() < 0) {
                for (const auto& f : dfs) {
                    Expr fb = f.op() == Op::Pow ? f.args()[0] : f;
                    if (!f.is_const() && e.args()[0] == fb) clean = false;
                }
            }
            for (const auto& a : e.args()) scan(a);
        };
        scan(direct);
        if (clean) return direct;
    }
    std::vector<std::string> vars = free_symbols(d);
    auto dp = to_poly(d, vars);
    if (!dp || dp->terms.empty()) return std::nullopt;
    auto np = to_expr_poly(num, vars);
    if (!np) return std::nullopt;
    // lex order: std::map orders monomials ascending, so the leading term is the last.
    const auto& [lead_m, lead_c] = *dp->terms.rbegin();
    Expr lead_inv = Expr::constant(Number::rational(*lead_c.inverse()));
    ExprPoly rem = *np;
    ExprPoly quot;
    ExprPoly leftover;
    int guard = 0;
    while (!rem.terms.empty()) {
        if (++guard > 10000) return std::nullopt;
        auto it = std::prev(rem.terms.end());
        Monomial m = it->first;
        Expr c = it->second;
        if (!divides(lead_m, m)) {
            leftover.terms[m] = c;
            rem.terms.erase(it);
            continue;
        }
        Monomial qm(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) qm[i] = m[i] - lead_m[i];
        Expr qc = c * lead_inv;
        quot.terms[qm] = quot.terms.count(qm) ? quot.terms[qm] + qc : qc;
        for (const auto& [dm, dc] : dp->terms) {
            Monomial pm(m.size());
            for (std::size_t i = 0; i < m.size(); ++i) pm[i] = qm[i] + dm[i];
            Expr sub = qc * Expr::constant(Number::rational(dc));
            auto jt = rem.terms.find(pm);
            if (jt == rem.terms.end()) {
                rem.terms.emplace(pm, neg(sub));
            } else {
                jt->second = jt->second - sub;
            }
        }
        std::erase_if(rem.terms, [&](const auto& kv) { return kv.second.is_zero() || is_zero_expr(kv.second, patch); });
    }
    for (const auto& [m, c] : leftover.terms) {
        if (!is_zero_expr(c, patch)) return std::nullopt;
    }
    std::vector<Expr> out;
    for (const auto& [m, c] : quot.terms) {
        std::vector<Expr> fs{c};
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (m[i] > 0) fs.push_back(pow(Expr::coord(vars[i]), Expr::integer(m[i])));
        }
        out.push_back(mul(std::move(fs)));
    }
    return add(std::move(out));
}

// ---------------------------------------------------------------- compiled evaluation

CompiledExpr::CompiledExpr(const Expr& e, const Patch& patch, const Bindings& params) {
    std::function<int(const Expr&)> emit = [&](const Expr& x) -> int {
        Instr in;
        in.op = x.op();
        switch (x.op()) {
            case Op::Const: in.value = x.number().value(); break;
            case Op::Coord:
            case Op::Param: {
                auto idx = patch.index_of(x.name());
                if (idx) {
                    in.op = Op::Coord;
                    in.coord = static_cast<int>(*idx);
                } else {
                    auto it = params.find(x.name());
                    if (it == params.end()) throw EvalError(EvalError::Kind::Unbound, "unbound symbol '" + x.name() + "'");
                    in.op = Op::Const;
                    in.value = it->second;
                }
                break;
            }
            case Op::Add:
            case Op::Mul:
                for (const auto& a : x.args()) in.list.push_back(emit(a));
                break;
            case Op::Pow:
                in.a = emit(x.args()[0]);
                in.b = emit(x.args()[1]);
                break;
            default: in.a = emit(x.args()[0]); break;
        }
        code_.push_back(std::move(in));
        return static_cast<int>(code_.size()) - 1;
    };
    emit(e);
}

double CompiledExpr::run(std::span<const double> x, int* status) const noexcept {
    thread_local std::vector<double> regs;
    if (regs.size() < code_.size()) regs.resize(code_.size());
    *status = 0;
    for (std::size_t i = 0; i < code_.size(); ++i) {
        const Instr& in = code_[i];
        double v = 0.0;
        switch (in.op) {
            case Op::Const: v = in.value; break;
            case Op::Coord: v = x[static_cast<std::size_t>(in.coord)]; break;
            case Op::Param: v = in.value; break;
            case Op::Add:
                for (int k : in.list) v += regs[static_cast<std::size_t>(k)];
                break;
            case Op::Mul:
                v = 1.0;
                for (int k : in.list) v *= regs[static_cast<std::size_t>(k)];
                break;
            case Op::Pow: {
                double b = regs[static_cast<std::size_t>(in.a)];
                double e = regs[static_cast<std::size_t>(in.b)];
                if (b == 0.0 && e < 0) {
                    *status = 1;
                    return std::numeric_limits<double>::quiet_NaN();
                }
                if (b < 0 && std::floor(e) != e) {
                    *status = 2;
                    return std::numeric_limits<double>::quiet_NaN();
                }
                if (e == 2.0) {
                    v = b * b;
                } else if (e == -1.0) {
                    v = 1.0 / b;
                } else {
                    v = std::pow(b, e);
                }
                break;
            }
            case Op::Neg: v = -regs[static_cast<std::size_t>(in.a)]; break;
            case Op::Sin: v = std::sin(regs[static_cast<std::size_t>(in.a)]); break;
            case Op::Cos: v = std::cos(regs[static_cast<std::size_t>(in.a)]); break;
            case Op::Exp: v = std::exp(regs[static_cast<std::size_t>(in.a)]); break;
            case Op::Log: {
                double a = regs[static_cast<std::size_t>(in.a)];
                if (a == 0.0) {
                    *status = 1;
                    return std::numeric_limits<double>::quiet_NaN();
                }
                if (a < 0.0) {
                    *status = 2;
                    return std::numeric_limits<double>::quiet_NaN();
                }
                v = std::log(a);
                break;
            }
            case Op::Abs: v = std::abs(regs[static_cast<std::size_t>(in.a)]); break;
        }
        regs[i] = v;
    }
    double r = code_.empty() ? 0.0 : regs[code_.size() - 1];
    if (!std::isfinite(r)) *status = 3;
    return r;
}

double CompiledExpr::operator()(std::span<const double> x) const {
    int status = 0;
    double v = run(x, &status);
    switch (status) {
        case 0: return v;
        case 1: throw EvalError(EvalError::Kind::Pole, "pole: division by zero");
        case 2: throw EvalError(EvalError::Kind::Domain, "domain error");
        default: throw EvalError(EvalError::Kind::NonFinite, "non-finite value");
    }
}

double CompiledExpr::eval_nothrow(std::span<const double> x) const noexcept {
    int status = 0;
    double v = run(x, &status);
    return status == 0 ? v : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace bgeo
