// Two-dimensional b-Poisson structures Pi = P d1 ^ d2 on the sphere and the
// torus: zero curves, modular vector fields, modular periods and the
// regularized Liouville volume.
#pragma once

#include "bgeo/forms.hpp"

#include <array>
#include <string>
#include <vector>

namespace bgeo {

class SurfaceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Topology { Sphere, Torus };

std::string topology_name(Topology t);
Topology parse_topology(const std::string& name);

/// Sphere chart (h, theta), h in [-1, 1], theta periodic.
Patch sphere_chart();
/// Torus chart (theta1, theta2), both periodic.
Patch torus_chart();

/// Sign of the chart's coordinate orientation relative to the standard
/// orientation of the surface. The (h, theta) chart is negatively oriented
/// with respect to the outward normal.
int chart_orientation(Topology t);

struct SurfaceStructure {
    Topology topology = Topology::Sphere;
    Patch patch;
    Expr P;
    Expr V = Expr::integer(1);
    int orientation = 1;
    Bindings params;

    static SurfaceStructure make(Topology topology, const std::string& P, const std::string& V = "1",
                                 int orientation = 1);
};

struct SurfaceOptions {
    int grid = 64;
    double tau_curve = 1e-12;
    double delta_reg = 1e-6;
    double delta_pole = 1e-3;
    double eps0 = 1e-2;
    int eps_halvings = 8;
    double tau_log = 1e-4;
    int outer_nodes = 64;
    int inner_samples = 400;
    int period_refinements = 2;
};

struct ZeroCurve {
    std::vector<std::array<double, 2>> points;  // chart coordinates, periodic ones reduced
    bool closed = false;
    double length = 0.0;                        // chart (Euclidean) arc length
};

/// Contours of P = 0 by marching squares with periodic stitching; crossing
/// points are 1-D root solves on grid edges.
std::vector<ZeroCurve> extract_zero_set(const SurfaceStructure& s, const SurfaceOptions& opts = {});

struct VectorField2 {
    Expr x1;
    Expr x2;
};

/// Modular vector field ((PV)_2 / V, -(PV)_1 / V). With Hamiltonian fields
/// u_g = (P g_2, -P g_1) this gives d/dt for P = z in coordinates (t, z),
/// and replacing V by H V adds u_{log|H|}.
VectorField2 modular_field(const Expr& P, const Expr& V, const Patch& patch);
VectorField2 modular_field(const SurfaceStructure& s);

/// u_g(k) = {k, g} = (P g_2, -P g_1).
VectorField2 hamiltonian_field(const Expr& P, const Expr& g, const Patch& patch);

/// Dual b-form of Pi relative to f = P, written as alpha ^ dP/P with
/// alpha = (P_2 dx1 - P_1 dx2) / |grad P|^2 (valid where grad P != 0).
BForm dual_bform(const SurfaceStructure& s);

struct PeriodReport {
    double period = 0.0;
    std::vector<double> levels;  // trapezoid sums per refinement level
    double min_speed = 0.0;
};

PeriodReport modular_period(const SurfaceStructure& s, const ZeroCurve& curve, const SurfaceOptions& opts = {});

struct VolumeReport {
    double volume = 0.0;
    double log_coefficient = 0.0;
    bool limit_exists = false;
    std::vector<double> eps;
    std::vector<double> values;
    std::size_t inner_coord = 0;
    int chart_sign = 1;
};

/// lim_{eps -> 0} of the integral of (1/P) dx1 ^ dx2 over {|P * cutoff| > eps}
/// in the surface orientation. `limit_exists` is false when the fitted log
/// coefficient reaches tau_log.
VolumeReport regularized_volume(const SurfaceStructure& s, const SurfaceOptions& opts = {},
                                const std::optional<Expr>& cutoff_factor = std::nullopt);

struct RadkoInvariants {
    std::size_t n = 0;
    std::vector<double> periods;  // sorted
    double volume = 0.0;
    std::vector<ZeroCurve> curves;
    VolumeReport volume_report;
};

RadkoInvariants radko_invariants(const SurfaceStructure& s, const SurfaceOptions& opts = {});

struct ClassifyVerdict {
    bool equivalent = false;
    std::string witness;  // empty when equivalent
    RadkoInvariants first;
    RadkoInvariants second;
};

ClassifyVerdict classify_pair(const SurfaceStructure& a, const SurfaceStructure& b, double tol,
                              const SurfaceOptions& opts = {});

/// Dimensions (H^0, H^1, H^2) of Poisson cohomology for genus g and n curves.
std::array<int, 3> surface_poisson_cohomology(int genus, int curves);

}  // namespace bgeo
