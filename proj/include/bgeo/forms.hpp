// Exterior calculus on a coordinate patch: smooth forms, b-forms relative to
// a defining function f, and b-bivectors expressed in the b-frame.
//
// A b-form of degree k is stored as the pair (alpha, beta) standing for
// alpha ^ df/f + beta. Frame computations use the anchor coordinate x_j with
// df/dx_j != 0 near Z: the b-coframe is dx_a (a != j) together with df/f in
// slot j, and the dual b-frame is d/dx_a - (f_a/f_j) d/dx_j, (f/f_j) d/dx_j.
#pragma once

#include "bgeo/symexpr.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bgeo {

class FormError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Strictly increasing coordinate indices.
using Index = std::vector<int>;

/// All strictly increasing index tuples of length k in {0..n-1}, lexicographic.
std::vector<Index> basis_indices(std::size_t n, int k);

class SmoothForm {
public:
    SmoothForm() = default;
    SmoothForm(Patch patch, int degree);

    static SmoothForm function(const Patch& patch, const Expr& value);
    static SmoothForm differential(const Patch& patch, std::size_t coord);
    /// Basis form dx_{i1} ^ ... ^ dx_{ik} with arbitrary index order.
    static SmoothForm basis(const Patch& patch, const Index& idx, const Expr& coeff);

    int degree() const noexcept { return degree_; }
    const Patch& patch() const noexcept { return patch_; }
    const std::map<Index, Expr>& coeffs() const noexcept { return coeffs_; }
    Expr coeff(const Index& idx) const;

    /// Adds coeff * dx_idx; idx may be unsorted (sign applied) or contain
    /// repeats (ignored).
    void accumulate(const Index& idx, const Expr& coeff);

    bool is_structurally_zero() const noexcept { return coeffs_.empty(); }

    SmoothForm operator+(const SmoothForm& o) const;
    SmoothForm operator-(const SmoothForm& o) const;
    SmoothForm operator-() const;
    SmoothForm scaled(const Expr& s) const;

    /// Coefficients in basis_indices order.
    std::vector<double> values(std::span<const double> x, const Bindings& params = {}) const;

    std::string str() const;

private:
    Patch patch_;
    int degree_ = 0;
    std::map<Index, Expr> coeffs_;
};

SmoothForm wedge(const SmoothForm& a, const SmoothForm& b);
SmoothForm d(const SmoothForm& w);
/// Contraction with the vector field sum v[i] d/dx_i.
SmoothForm interior(const std::vector<Expr>& v, const SmoothForm& w);
/// Pullback along a map whose component a is `map[a]`, an expression in the
/// coordinates of `source`.
SmoothForm pullback(const SmoothForm& w, const Patch& source, const std::vector<Expr>& map);

bool forms_equiv(const SmoothForm& a, const SmoothForm& b, const EquivOptions& opts = {});
bool form_is_zero(const SmoothForm& a, const EquivOptions& opts = {});

class BForm {
public:
    BForm() = default;
    BForm(SmoothForm alpha, SmoothForm beta, Expr f);

    static BForm from_smooth(const SmoothForm& beta, const Expr& f);

    int degree() const noexcept { return beta_.degree(); }
    const SmoothForm& alpha() const noexcept { return alpha_; }
    const SmoothForm& beta() const noexcept { return beta_; }
    const Expr& f() const noexcept { return f_; }
    const Patch& patch() const noexcept { return beta_.patch(); }
    bool is_smooth_representation() const noexcept { return alpha_.is_structurally_zero(); }

    BForm operator+(const BForm& o) const;
    BForm operator-(const BForm& o) const;
    BForm scaled(const Expr& s) const;

    /// Re-expresses the same b-form relative to the defining function f*h.
    BForm with_defining_factor(const Expr& h) const;

    /// Smooth top-degree form alpha ^ df + f beta, i.e. f times the b-form.
    SmoothForm times_f() const;

    std::string str() const;

private:
    SmoothForm alpha_;
    SmoothForm beta_;
    Expr f_;
};

BForm wedge(const BForm& a, const BForm& b);
BForm wedge(const BForm& a, const SmoothForm& b);
BForm wedge(const SmoothForm& a, const BForm& b);
BForm d(const BForm& w);
BForm power(const BForm& w, int n);

bool bforms_equiv(const BForm& a, const BForm& b, const EquivOptions& opts = {});

// ---------------------------------------------------------------- sampling

struct GridSpec {
    int per_axis = 64;
    std::size_t max_points = 65536;
};

/// Tensor grid over the patch; periodic axes exclude the right endpoint.
/// The per-axis count is reduced when per_axis^dim exceeds max_points.
struct Grid {
    std::vector<std::vector<double>> axes;
    std::size_t size() const;
    std::vector<double> point(std::size_t flat) const;
    std::vector<std::size_t> multi_index(std::size_t flat) const;
    std::size_t flat_index(const std::vector<std::size_t>& mi) const;
    int per_axis() const { return axes.empty() ? 0 : static_cast<int>(axes.front().size()); }
};

Grid make_grid(const Patch& patch, const GridSpec& spec);

// ---------------------------------------------------------------- transversality

struct ZeroComponent {
    std::size_t cells = 0;
    std::vector<double> sample;  // one located zero point
};

struct TransversalityReport {
    bool regular = false;        // every located zero has |grad f| > delta_reg
    bool nonempty = false;       // at least one zero located
    bool degenerate_zero = false;
    bool grid_too_coarse = false;
    std::size_t zero_points = 0;
    double min_grad = 0.0;
    int grid_per_axis = 0;
    double delta_reg = 1e-6;
    std::vector<ZeroComponent> components;
    std::vector<std::vector<double>> zeros;
    std::vector<std::string> messages;
};

TransversalityReport transversality_check(const Expr& f, const Patch& patch, const GridSpec& grid = {},
                                          double delta_reg = 1e-6, const Bindings& params = {});

/// Coordinate used as the b-frame anchor: f affine in it with constant slope
/// when possible, else the coordinate with the largest mean |df/dx_j| on Z.
std::size_t anchor_coordinate(const Expr& f, const Patch& patch, const Bindings& params = {});

// ---------------------------------------------------------------- restriction

/// Z component written as the graph x_j = phi(other coordinates).
struct ZGraph {
    std::size_t coord = 0;
    Expr phi;
    bool numeric = false;  // phi located by 1-D root solves and found constant
};

struct RestrictionPair {
    ZGraph graph;
    Patch z_patch;
    SmoothForm alpha_tilde;  // degree k-1 on Z
    SmoothForm beta_tilde;   // degree k on Z
};

/// Z = {f = 0} as a union of coordinate graphs. Throws FormError when some
/// component is not such a graph.
std::vector<ZGraph> zero_set_graphs(const Expr& f, const Patch& patch, const Bindings& params = {});

std::vector<RestrictionPair> restrict_to_Z(const BForm& w, const Bindings& params = {});

/// Pullback of a form on the ambient patch to the Z component `g`.
SmoothForm restrict_form(const SmoothForm& w, const ZGraph& g, const Patch& z_patch);
Patch z_patch_for(const Patch& patch, const ZGraph& g);

// ---------------------------------------------------------------- smoothness

enum class SmoothStatus { Smooth, NotSmooth, Inconclusive };

struct SmoothnessResult {
    SmoothStatus status = SmoothStatus::Inconclusive;
    std::optional<SmoothForm> form;
    std::string detail;
};

/// A b-form is smooth exactly when alpha ^ df is divisible by f, equivalently
/// when the pullback of alpha to Z vanishes.
SmoothnessResult is_smooth(const BForm& w, const Bindings& params = {});

// ---------------------------------------------------------------- nondegeneracy

struct NondegeneracyReport {
    bool nondegenerate = false;
    std::string symbolic_verdict;  // "nonzero constant", "identically zero", "undecided"
    std::string top_coefficient;   // coefficient of f * w^n
    double min_abs = 0.0;
    std::vector<double> argmin;
    std::size_t samples = 0;
    std::size_t failed_evaluations = 0;
    int grid_per_axis = 0;
    double threshold = 1e-6;
};

NondegeneracyReport nondegeneracy_check(const BForm& w, const GridSpec& grid = {}, const Bindings& params = {},
                                        double threshold = 1e-6);

// ---------------------------------------------------------------- b-frame and duality

class BMultivector {
public:
    BMultivector() = default;
    BMultivector(Patch patch, Expr f, std::size_t anchor, std::map<Index, Expr> coeffs);

    const Patch& patch() const noexcept { return patch_; }
    const Expr& f() const noexcept { return f_; }
    std::size_t anchor() const noexcept { return anchor_; }
    const std::map<Index, Expr>& coeffs() const noexcept { return coeffs_; }
    Expr coeff(const Index& idx) const;

    /// Bivector components Pi^{ab} in coordinate vector fields (a < b).
    std::map<Index, Expr> coordinate_components() const;
    Eigen::MatrixXd frame_matrix(std::span<const double> x, const Bindings& params = {}) const;

private:
    Patch patch_;
    Expr f_;
    std::size_t anchor_ = 0;
    std::map<Index, Expr> coeffs_;
};

/// Symbolic b-coframe matrix of a b-two-form (entry (a, b) = w(V_a, V_b)).
std::vector<std::vector<Expr>> bframe_matrix(const BForm& w, std::size_t anchor);

/// Numeric evaluation helper for degree-2 b-forms.
class CompiledBForm2 {
public:
    CompiledBForm2(const BForm& w, const Bindings& params = {});
    std::size_t dim() const noexcept { return n_; }
    double f(std::span<const double> x) const { return f_.eval_nothrow(x); }
    Eigen::VectorXd grad_f(std::span<const double> x) const;
    /// b-frame matrix with the given anchor (or the coordinate maximizing
    /// |df/dx_j| at x when anchor < 0).
    Eigen::MatrixXd matrix(std::span<const double> x, int anchor = -1, int* used_anchor = nullptr) const;
    /// Columns are the b-frame vectors in coordinates.
    Eigen::MatrixXd frame(std::span<const double> x, int anchor) const;
    /// Coordinate matrix of the form (off Z only).
    Eigen::MatrixXd coordinate_matrix(std::span<const double> x) const;

private:
    std::size_t n_ = 0;
    CompiledExpr f_;
    std::vector<CompiledExpr> df_;
    std::vector<CompiledExpr> alpha_;
    std::vector<std::vector<CompiledExpr>> beta_;
    std::vector<std::vector<bool>> beta_present_;
    std::vector<bool> alpha_present_;
};

struct DualizeOptions {
    GridSpec grid{16, 4096};
    double rank_tol = 1e-10;
    std::optional<std::size_t> anchor;
};

BMultivector dualize(const BForm& w, const DualizeOptions& opts = {}, const Bindings& params = {});
BForm dualize(const BMultivector& p, const DualizeOptions& opts = {}, const Bindings& params = {});

/// Pointwise numeric inverse for any even dimension: returns -W^{-1}.
Eigen::MatrixXd dualize_matrix(const Eigen::MatrixXd& w);

}  // namespace bgeo
