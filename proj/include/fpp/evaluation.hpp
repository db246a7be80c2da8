#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "fpp/image.hpp"
#include "fpp/unwrapping.hpp"

namespace fpp {

struct SphereFit {
    Eigen::Vector3d center{0, 0, 0};
    double radius = 0;
    double rms = 0;        // geometric residual over the points used
    int inliers = 0;       // points kept by the fit
    double condition = 0;  // design-matrix condition number (coverage quality)
};

// Algebraic least-squares sphere refined by five Gauss-Newton iterations on
// the geometric distance.  `mad_trim` drops residuals outside 3 sigma (MAD
// estimate) after an initial fit and refits on the survivors.
SphereFit fit_sphere(const std::vector<Eigen::Vector3d>& points, bool mad_trim = false);

struct SpherePairTruth {
    std::vector<double> radii{25.3989, 25.4038};  // mm
    double center_distance = 100.0532;            // mm
};

struct SpherePairReport {
    SphereFit fit1, fit2;
    double center_distance = 0;
    double r1_deviation = 0;  // fitted minus configured, mm
    double r2_deviation = 0;
    double distance_deviation = 0;
};

SpherePairReport sphere_pair_report(const std::vector<Eigen::Vector3d>& cloud1,
                                    const std::vector<Eigen::Vector3d>& cloud2,
                                    const SpherePairTruth& truth = {}, bool mad_trim = false);

struct OrderErrorStats {
    double rate = 0;               // wrong / decided (0 when nothing decided)
    size_t wrong = 0;
    size_t decided = 0;
    size_t total = 0;              // truth-masked pixels
    double undecided_fraction = 0;
};

// Prediction vs truth on the truth mask; pixels the prediction left
// undecided are counted separately from wrong decisions.
OrderErrorStats order_error_rate(const OrderMap& pred, const OrderMap& truth);

struct ErrorMaps {
    double phase_rmse = 0;  // rad
    double depth_rmse = 0;  // mm
    ImageD phase_error;     // signed, zero off-mask
    ImageD depth_error;
};

ErrorMaps phase_and_depth_errors(const ImageD& pred_phi, const ImageD& truth_phi,
                                 const ImageD& pred_depth, const ImageD& truth_depth,
                                 const MaskImage& mask);

// One run's metrics, serialized as JSON. Round-trips exactly.
struct EvaluationReport {
    std::string scene;
    std::string retrieval_method;
    std::string unwrap_method;
    int views = 0;
    std::optional<OrderErrorStats> orders;
    std::optional<double> phase_rmse;
    std::optional<double> depth_rmse;
    std::string phase_error_path;  // FPI1 maps, relative to the report
    std::string depth_error_path;
    std::optional<SpherePairReport> spheres;
};

void save_report(const std::string& path, const EvaluationReport& report);
EvaluationReport load_report(const std::string& path);

}  // namespace fpp
