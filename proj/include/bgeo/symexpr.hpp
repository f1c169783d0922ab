// Symbolic scalar expressions over named coordinates and parameters.
//
// Expressions are immutable trees shared through `Expr` handles. The parser
// builds raw trees; every algebraic operation (operators, diff, substitute)
// returns normalized trees. Normalization flattens sums and products, folds
// constants, collects like terms and applies sin^2 + cos^2 -> 1 once.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bgeo {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t position)
        : std::runtime_error(msg + " at position " + std::to_string(position)), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class EvalError : public std::runtime_error {
public:
    enum class Kind { Unbound, Pole, Domain, NonFinite };
    EvalError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Exact rational with 64-bit parts. Arithmetic that would overflow yields
/// an empty optional; callers fall back to floating point.
class Rational {
public:
    Rational() = default;
    Rational(std::int64_t n) : num_(n), den_(1) {}  // NOLINT(implicit)
    Rational(std::int64_t n, std::int64_t d);

    std::int64_t num() const noexcept { return num_; }
    std::int64_t den() const noexcept { return den_; }
    double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }
    bool is_zero() const noexcept { return num_ == 0; }
    bool is_integer() const noexcept { return den_ == 1; }

    static std::optional<Rational> add(const Rational& a, const Rational& b);
    static std::optional<Rational> mul(const Rational& a, const Rational& b);
    static std::optional<Rational> pow(const Rational& a, std::int64_t e);
    std::optional<Rational> negate() const;
    std::optional<Rational> inverse() const;

    friend bool operator==(const Rational&, const Rational&) = default;
    friend std::strong_ordering operator<=>(const Rational& a, const Rational& b);
    std::string str() const;

private:
    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

/// Numeric constant: exact rational unless some operation forced a float.
struct Number {
    bool exact = true;
    Rational q;
    double d = 0.0;

    static Number rational(Rational r) { return Number{true, r, r.to_double()}; }
    static Number real(double v) { return Number{false, Rational{}, v}; }
    double value() const noexcept { return exact ? q.to_double() : d; }
    bool is_zero() const noexcept { return exact ? q.is_zero() : d == 0.0; }
    bool is_one() const noexcept { return exact ? q == Rational(1) : d == 1.0; }

    friend Number operator+(const Number& a, const Number& b);
    friend Number operator*(const Number& a, const Number& b);
    Number operator-() const;
    std::string str() const;
};

enum class Op { Const, Coord, Param, Add, Mul, Pow, Neg, Sin, Cos, Exp, Log, Abs };

struct Node;

class Expr {
public:
    Expr();  // constant zero
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

    static Expr constant(Number n);
    static Expr integer(std::int64_t v) { return constant(Number::rational(Rational(v))); }
    static Expr rational(std::int64_t n, std::int64_t d) { return constant(Number::rational(Rational(n, d))); }
    static Expr real(double v) { return constant(Number::real(v)); }
    static Expr coord(const std::string& name);
    static Expr param(const std::string& name);

    // Unnormalized builders used by the parser.
    static Expr raw(Op op, std::vector<Expr> args);

    Op op() const noexcept;
    const Node& node() const noexcept { return *node_; }
    const std::vector<Expr>& args() const noexcept;
    const std::string& name() const noexcept;
    const Number& number() const noexcept;
    std::size_t hash() const noexcept;

    bool is_const() const noexcept { return op() == Op::Const; }
    bool is_zero() const noexcept { return is_const() && number().is_zero(); }
    bool is_one() const noexcept { return is_const() && number().is_one(); }
    std::optional<double> const_value() const;

    std::string str() const;

    friend bool operator==(const Expr& a, const Expr& b);
    friend bool operator<(const Expr& a, const Expr& b) { return compare(a, b) < 0; }
    static int compare(const Expr& a, const Expr& b);

private:
    std::shared_ptr<const Node> node_;
};

struct Node {
    Op op;
    Number num;
    std::string name;
    std::vector<Expr> args;
    std::size_t hash = 0;
};

// Normalizing constructors.
Expr add(std::vector<Expr> terms);
Expr mul(std::vector<Expr> factors);
Expr pow(const Expr& base, const Expr& exponent);
Expr neg(const Expr& e);
Expr sin(const Expr& e);
Expr cos(const Expr& e);
Expr exp(const Expr& e);
Expr log(const Expr& e);
Expr abs(const Expr& e);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

Expr normalize(const Expr& e);

/// Ordered coordinate chart with per-coordinate intervals and periodicity.
struct Coordinate {
    std::string name;
    double lo = -1.0;
    double hi = 1.0;
    std::optional<double> period;  // periodic coordinates span [lo, lo + period)
};

class Patch {
public:
    Patch() = default;
    Patch(std::vector<Coordinate> coords, std::vector<std::string> params = {});

    std::size_t dim() const noexcept { return coords_.size(); }
    const std::vector<Coordinate>& coords() const noexcept { return coords_; }
    const Coordinate& coord(std::size_t i) const { return coords_.at(i); }
    const std::vector<std::string>& params() const noexcept { return params_; }
    std::optional<std::size_t> index_of(const std::string& name) const;
    std::optional<std::size_t> param_index(const std::string& name) const;
    bool is_coordinate(const std::string& name) const { return index_of(name).has_value(); }
    bool is_param(const std::string& name) const { return param_index(name).has_value(); }
    Expr symbol(std::size_t i) const { return Expr::coord(coords_.at(i).name); }
    Patch with_params(std::vector<std::string> params) const { return Patch(coords_, std::move(params)); }

    friend bool operator==(const Patch&, const Patch&);

private:
    std::vector<Coordinate> coords_;
    std::vector<std::string> params_;
};

using Bindings = std::map<std::string, double>;

Expr parse_expr(const std::string& text, const Patch& patch);

double eval_expr(const Expr& e, const Bindings& point, const Bindings& params = {});

Expr diff_expr(const Expr& e, const std::string& coord);

/// Replaces symbol `name` by `value` and renormalizes.
Expr substitute(const Expr& e, const std::string& name, const Expr& value);
Expr substitute(const Expr& e, const std::map<std::string, Expr>& values);

bool depends_on(const Expr& e, const std::string& name);
std::vector<std::string> free_symbols(const Expr& e);

/// Seed used by default-constructed EquivOptions (initially 20240601).
std::uint64_t default_equiv_seed() noexcept;
void set_default_equiv_seed(std::uint64_t seed) noexcept;

struct EquivOptions {
    int samples = 64;
    double rel_tol = 1e-9;
    std::uint64_t seed = default_equiv_seed();
    Bindings fixed_params;  // parameters not listed here are sampled in [0.5, 2]
};

/// Semidecision: exact when both sides are rational polynomials, otherwise
/// randomized sampling at interior points of the patch.
bool expr_equiv(const Expr& a, const Expr& b, const Patch& patch, const EquivOptions& opts = {});

/// True when `e` normalizes to the constant zero or is numerically zero by
/// expr_equiv against 0.
bool is_zero_expr(const Expr& e, const Patch& patch, const EquivOptions& opts = {});

/// Closed-form antiderivative in `var` for polynomials in `var` (coefficients
/// free of `var`) and for sin/cos/exp of affine arguments. Empty when no rule
/// applies.
std::optional<Expr> antiderivative(const Expr& e, const std::string& var);

/// Distributes products and nonnegative integer powers over sums.
Expr expand(const Expr& e);

/// Exact quotient num/den when den is a polynomial in its symbols with a
/// rational leading coefficient and the division leaves no remainder.
std::optional<Expr> exact_divide(const Expr& num, const Expr& den, const Patch& patch);

/// Flat evaluation program with coordinates bound by patch index and
/// parameters bound by value at compile time.
class CompiledExpr {
public:
    CompiledExpr() = default;
    CompiledExpr(const Expr& e, const Patch& patch, const Bindings& params = {});

    /// Throws EvalError on poles, domain errors and non-finite results.
    double operator()(std::span<const double> x) const;
    /// Returns NaN instead of throwing.
    double eval_nothrow(std::span<const double> x) const noexcept;

private:
    struct Instr {
        Op op;
        int a = -1;
        int b = -1;
        double value = 0.0;
        int coord = -1;
        std::vector<int> list;
    };
    double run(std::span<const double> x, int* status) const noexcept;
    std::vector<Instr> code_;
};

}  // namespace bgeo
