// Extensions of a corank-one Poisson hypersurface Z, given by closed defining
// forms (alpha, omega), to the b-symplectic model p*alpha ^ dt/t + p*omega.
#pragma once

#include "bgeo/forms.hpp"
#include "bgeo/normalform.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bgeo {

class ExtensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct HypersurfaceData {
    Patch patch;         // coordinates on Z, odd dimension
    SmoothForm alpha;    // degree 1
    SmoothForm omega;    // degree 2
    Bindings params;
};

struct DefiningCheck {
    std::string name;
    bool ok = false;
    std::string detail;
    std::vector<double> witness;  // failing sample point, when there is one
};

struct DefiningReport {
    bool all_pass = false;
    std::vector<DefiningCheck> checks;
    int grid_per_axis = 0;
    double threshold = 0.0;
};

/// alpha nowhere vanishing, d alpha = 0, d omega = 0 and alpha ^ omega^(n-1)
/// nowhere vanishing, on a grid over Z.
DefiningReport check_defining_forms(const HypersurfaceData& data, const GridSpec& grid = {32, 32768},
                                    double threshold = 1e-8);

/// alpha ^ omega^(n-1), a top-degree form on Z.
SmoothForm leafwise_volume(const HypersurfaceData& data);

enum class ExtensionKind { Collar, Sine };

struct ExtensionModel {
    ExtensionKind kind = ExtensionKind::Collar;
    Patch patch;        // Z x (-eps, eps), or Z x circle for the sine variant
    std::string normal; // name of the added coordinate
    double eps = 1.0;
    BForm form;
    HypersurfaceData data;
    std::vector<std::string> provenance;
};

struct ExtensionOptions {
    GridSpec grid{12, 20736};
    double threshold = 1e-8;
};

/// p*alpha ^ dt/t + p*omega on Z x (-eps, eps).
ExtensionModel build_extension(const HypersurfaceData& data, double eps = 1.0, const std::string& normal = "t",
                               const ExtensionOptions& opts = {});

/// (1/sin s) ds ^ p*alpha + p*omega on Z x circle; the zero set is the two
/// copies s = 0 and s = pi of Z.
ExtensionModel build_sine_extension(const HypersurfaceData& data, const std::string& normal,
                                    const ExtensionOptions& opts = {});

struct CompareVerdict {
    bool same_restriction = false;
    bool modular_checked = false;
    bool equivalent = false;
    std::string detail;
    std::optional<MoserReport> moser;
};

/// Compares restrictions to Z and, when they agree, optionally runs the
/// relative Moser verifier on the common collar.
CompareVerdict compare_extensions(const ExtensionModel& m1, const ExtensionModel& m2, bool run_moser = true,
                                  const MoserOptions& moser = {8, 4096, 1.0 / 32});

/// The same b-form on another patch with the same coordinate names.
BForm rehome(const BForm& w, const Patch& patch);

}  // namespace bgeo
