#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include <json.hpp>

#include "qdiv/panel.hpp"

namespace qdiv {

/// Single-factor Gaussian market:
///   r_M,t ~ N(mu_m, sigma_m^2),  r_i,t = beta_i r_M,t + eps_i,t,  eps ~ N(0, omega_i^2),
///   cap_i,t = cap_i,t-1 (1 + r_i,t),  log cap_i,0 ~ N(cap_log_mean, cap_log_sd^2).
struct SynthSpec {
    int n_assets = 100;
    int n_months = 600;
    std::uint64_t seed = 1;
    double mu_m = 0.005;
    double sigma_m = 0.045;
    std::pair<double, double> beta_range{0.5, 1.5};
    std::pair<double, double> omega_range{0.04, 0.12};
    double cap_log_mean = 21.0;
    double cap_log_sd = 1.0;
    YearMonth start{1970, 1};

    void validate() const;
};

struct SynthTruth {
    VectorXd beta;
    VectorXd omega;
    double sigma_f = 0;
    double mu_m = 0;
};

/// Seeded, platform-independent random source: the standard's mt19937_64
/// engine with hand-written uniform (53-bit) and Box-Muller normal draws,
/// because the standard distributions are implementation-defined.
class PortableRng {
public:
    explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

    double uniform();  // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();   // N(0, 1)

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Returns below this are clamped so generated panels stay valid.
inline constexpr double kMinSyntheticReturn = -0.99;

std::pair<ReturnsPanel, SynthTruth> generate(const SynthSpec& spec);

nlohmann::json truth_to_json(const SynthSpec& spec, const SynthTruth& truth, const ReturnsPanel& panel);

}  // namespace qdiv
