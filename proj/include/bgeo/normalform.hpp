// Darboux coordinates for 2-D b-symplectic forms, the radial Poincare
// primitive, and numerical verification of the Moser path method.
#pragma once

#include "bgeo/forms.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace bgeo {

class NormalFormError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CoordinateChange {
    Patch source;
    Patch target;
    bool symbolic = false;
    std::vector<Expr> forward;  // symbolic components (empty unless symbolic)
    std::function<std::vector<double>(std::span<const double>)> evaluate;
    std::optional<Expr> jacobian;
};

struct DarbouxOptions {
    int grid = 64;
    double fd_step = 1e-5;
};

struct DarbouxResult {
    CoordinateChange change;
    std::size_t z_coord = 0;     // source coordinate playing z1 (f = z1)
    std::size_t s_coord = 1;     // source coordinate playing z2
    Expr g;                      // omega = (g / z1) dz1 ^ dz2
    std::optional<Expr> t;       // t(z1, z2) = integral_0^{z2} g(z1, s) ds
    bool symbolic_identity = false;
    double max_residual = 0.0;   // max |dt/dz2 (finite differences) - g| on the grid
    double min_abs_g = 0.0;
    int grid = 0;
};

/// Coordinates (z, t) with z = z1 and t = integral of g along z2, so that the
/// pullback of (1/z) dz ^ dt is omega. Requires f to be a coordinate.
DarbouxResult darboux2d(const BForm& w, const DarbouxOptions& opts = {}, const Bindings& params = {});

/// dx1 ^ dy1 / y1 + sum dx_i ^ dy_i on coordinates (x1, y1, x2, y2, ...).
BForm standard_bsymplectic(const Patch& patch);
/// d(x1 dy1 / y1 + sum x_i dy_i), the canonical form of the b-cotangent bundle.
BForm bcotangent_canonical(const Patch& patch);

struct DarbouxReport {
    std::string method;          // "darboux2d" or "model"
    bool exact = false;          // symbolic identity established
    double max_residual = 0.0;
    std::size_t samples = 0;
    double radius = 0.0;
};

/// Residual of the Darboux normal form at sample points near `point`.
DarbouxReport darboux_verify(const BForm& w, const std::vector<double>& point, std::size_t samples = 200,
                             const Bindings& params = {});

/// Radial homotopy primitive of a closed form about `center`. Symbolic when
/// the radial integrals have closed forms, Gauss-Legendre otherwise.
class RadialPrimitive {
public:
    RadialPrimitive(const SmoothForm& rho, std::vector<double> center, const Bindings& params = {});

    int degree() const noexcept { return degree_; }
    const std::optional<SmoothForm>& symbolic() const noexcept { return symbolic_; }
    const std::vector<double>& center() const noexcept { return center_; }
    /// Coefficients in basis_indices(dim, degree) order.
    std::vector<double> values(std::span<const double> x) const;

private:
    Patch patch_;
    int degree_ = 0;
    std::vector<double> center_;
    std::optional<SmoothForm> symbolic_;
    std::vector<CompiledExpr> compiled_;                 // symbolic coefficients
    std::vector<Index> rho_indices_;
    std::vector<CompiledExpr> rho_;                      // for quadrature
    std::vector<Index> basis_;
};

RadialPrimitive poincare_primitive(const SmoothForm& rho, const std::vector<double>& center, const Bindings& params = {});

/// max |d(primitive) - rho| over the given points, d taken by central differences.
double primitive_residual(const RadialPrimitive& p, const SmoothForm& rho, const std::vector<std::vector<double>>& points,
                          double step = 1e-5, const Bindings& params = {});

struct MoserOptions {
    int grid = 64;                 // residual sample grid per axis
    std::size_t max_points = 4096; // cap on residual samples
    double step = 1.0 / 256;       // RK4 step in t
    double fd_step = 1e-5;
    int max_halvings = 6;
    int nondeg_grid = 16;
    int t_checks = 9;
    double nondeg_tol = 1e-8;
    double tangency_tol = 1e-10;   // i*sigma must vanish on Z to this level
};

struct ResidualSample {
    std::vector<double> x;
    double residual = 0.0;
};

struct MoserReport {
    double max_residual = 0.0;
    double vfield_on_Z_max = 0.0;   // max |v_t| on Z
    double tangency_on_Z_max = 0.0; // max |df(v_t)| on Z
    int collar_halvings = 0;
    double collar_radius = 0.0;
    int steps = 0;
    int grid = 0;
    std::size_t samples = 0;
    std::string primitive;          // "symbolic", "quadrature" or "supplied"
    bool closed_correction = false; // primitive shifted by a closed form to vanish on Z
    std::optional<SmoothForm> primitive_form;
    std::vector<ResidualSample> residual_grid;
};

/// Relative Moser: omega_0 and omega_1 agree on Z. Solves i_v omega_t = sigma
/// with d sigma = omega_0 - omega_1 and integrates v_t for t in [0, 1].
MoserReport moser_relative_verify(const BForm& w0, const BForm& w1, const MoserOptions& opts = {},
                                  const Bindings& params = {});

/// Global Moser for a family omega_t (parameter `tname`) with d mu_t =
/// d omega_t / dt. Solves i_v omega_t = -mu_t.
MoserReport moser_global_verify(const BForm& family, const BForm& mu, const std::string& tname,
                                const MoserOptions& opts = {}, const Bindings& params = {});

struct ConvergenceReport {
    MoserReport coarse;
    MoserReport fine;
    double order = 0.0;  // log2(coarse residual / fine residual)
};

/// Runs the relative verifier at `base` and again with half the step and
/// twice the grid.
ConvergenceReport moser_convergence(const BForm& w0, const BForm& w1, const MoserOptions& base,
                                    const Bindings& params = {});

}  // namespace bgeo
