#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stainforge/image.hpp"
#include "stainforge/vlm.hpp"

namespace stainforge {

// Similarity metrics use a Gaussian window (size 11, sigma 1.5, K1 = 0.01,
// K2 = 0.03), 'valid' windows only, channel-averaged. On inputs smaller than
// the window, the window shrinks to the largest odd size that fits.

double ssim(const ImagePatch& a, const ImagePatch& b, double data_range);

// Luminance-free SSIM: mean of the contrast-structure map only.
double css(const ImagePatch& a, const ImagePatch& b, double data_range);

// Canonical 5-scale weights, renormalized when fewer scales are requested.
// `scales` in [1, 5]; min dimension must be >= (11 - 1) * 2^(scales-1) + 1.
double ms_ssim(const ImagePatch& a, const ImagePatch& b, double data_range, int scales = 5);

int max_ms_ssim_scales(Eigen::Index h, Eigen::Index w);

// 10*log10(R^2 / MSE), capped at 100 dB (identical images hit the cap).
double psnr(const ImagePatch& a, const ImagePatch& b, double data_range);

struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // sample covariance (n - 1 denominator), symmetrized
    std::int64_t count = 0;
};

// One-pass accumulator; finalize() needs count >= 2.
class FeatureAccumulator {
public:
    void add(const Eigen::VectorXd& feature);
    FeatureStats finalize() const;
    std::int64_t count() const { return n_; }

private:
    Eigen::VectorXd sum_;
    Eigen::MatrixXd outer_;
    std::int64_t n_ = 0;
};

// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}); the square root goes
// through sqrt(S1) * S2 * sqrt(S1), eigenvalues clamped at zero. Eigenvalues
// below -1e-6 raise NumericError.
double frechet_distance(const FeatureStats& s1, const FeatureStats& s2);

// Features come from the configured encoder backend on unit-range images.
double fid(const std::vector<ImagePatch>& set_a, const std::vector<ImagePatch>& set_b,
           const EncoderBackend& backend);

struct PairRecord {
    std::string name;
    std::map<std::string, double> values;  // metric -> value
};

struct MetricAggregate {
    double mean = 0.0, stddev = 0.0;
    std::int64_t count = 0;
};

struct MetricReport {
    std::vector<PairRecord> pairs;                    // ordered by filename
    std::map<std::string, MetricAggregate> aggregate; // population std-dev
    double fid_value = -1.0;                          // -1 when FID not requested
    double data_range = 1.0;
    std::string backend_info;
    std::string config_echo;  // JSON snapshot of the run configuration
};

// Valid metric names: ssim, css, msssim, psnr, fid.
MetricReport evaluate_pairset(const std::filesystem::path& pred_dir,
                              const std::filesystem::path& ref_dir,
                              const std::vector<std::string>& metric_names,
                              const EncoderBackend& backend, double data_range,
                              const std::string& config_echo = "{}");

std::string report_to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& text);

}  // namespace stainforge
