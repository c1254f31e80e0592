#include "qdiv/synthgen.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "qdiv/error.hpp"

namespace qdiv {

double PortableRng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double PortableRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

void SynthSpec::validate() const {
    auto bad = [](const std::string& why) { throw Error(ErrorCode::invalid_spec, why); };
    if (n_assets < 1) bad("n_assets must be positive");
    if (n_months < 62) bad("n_months must be at least 62");
    if (!(sigma_m > 0.0)) bad("sigma_m must be positive");
    if (!(beta_range.first <= beta_range.second)) bad("beta_range must be ordered");
    if (!(omega_range.first <= omega_range.second) || omega_range.first < 0.0) {
        bad("omega_range must be ordered and non-negative");
    }
    if (!(cap_log_sd >= 0.0)) bad("cap_log_sd must be non-negative");
    if (!std::isfinite(mu_m) || !std::isfinite(cap_log_mean)) bad("parameters must be finite");
}

std::pair<ReturnsPanel, SynthTruth> generate(const SynthSpec& spec) {
    spec.validate();
    const Index n = spec.n_assets;
    const Index t_len = spec.n_months;
    PortableRng rng(spec.seed);

    SynthTruth truth;
    truth.sigma_f = spec.sigma_m;
    truth.mu_m = spec.mu_m;
    truth.beta.resize(n);
    truth.omega.resize(n);
    for (Index i = 0; i < n; ++i) truth.beta(i) = rng.uniform(spec.beta_range.first, spec.beta_range.second);
    for (Index i = 0; i < n; ++i) truth.omega(i) = rng.uniform(spec.omega_range.first, spec.omega_range.second);
    VectorXd cap(n);
    for (Index i = 0; i < n; ++i) cap(i) = std::exp(spec.cap_log_mean + spec.cap_log_sd * rng.normal());

    ReturnsPanel panel;
    panel.returns.resize(t_len, n);
    panel.market.resize(t_len);
    panel.caps.resize(t_len, n);
    panel.dates.reserve(static_cast<std::size_t>(t_len));
    for (Index i = 0; i < n; ++i) panel.asset_ids.push_back("A" + std::to_string(i + 1));

    for (Index t = 0; t < t_len; ++t) {
        panel.dates.push_back(spec.start.plus_months(static_cast<int>(t)));
        const double m = std::max(spec.mu_m + spec.sigma_m * rng.normal(), kMinSyntheticReturn);
        panel.market(t) = m;
        for (Index i = 0; i < n; ++i) {
            const double eps = truth.omega(i) * rng.normal();
            const double r = std::max(truth.beta(i) * m + eps, kMinSyntheticReturn);
            panel.returns(t, i) = r;
            cap(i) *= 1.0 + r;
            panel.caps(t, i) = cap(i);
        }
    }
    panel.validate();
    return {std::move(panel), std::move(truth)};
}

nlohmann::json truth_to_json(const SynthSpec& spec, const SynthTruth& truth, const ReturnsPanel& panel) {
    nlohmann::json j;
    j["generator"] = "single_factor_gaussian";
    j["rng"] = "mt19937_64 + 53-bit uniform + Box-Muller";
    j["seed"] = spec.seed;
    j["n_assets"] = spec.n_assets;
    j["n_months"] = spec.n_months;
    j["start"] = spec.start.str();
    j["mu_m"] = truth.mu_m;
    j["sigma_f"] = truth.sigma_f;
    j["beta_range"] = {spec.beta_range.first, spec.beta_range.second};
    j["omega_range"] = {spec.omega_range.first, spec.omega_range.second};
    j["cap_log_mean"] = spec.cap_log_mean;
    j["cap_log_sd"] = spec.cap_log_sd;
    nlohmann::json assets = nlohmann::json::array();
    for (Index i = 0; i < truth.beta.size(); ++i) {
        assets.push_back({{"id", panel.asset_ids[static_cast<std::size_t>(i)]},
                          {"beta", truth.beta(i)},
                          {"omega", truth.omega(i)}});
    }
    j["assets"] = std::move(assets);
    return j;
}

}  // namespace qdiv
