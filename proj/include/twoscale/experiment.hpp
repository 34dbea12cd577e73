#ifndef TWOSCALE_EXPERIMENT_HPP
#define TWOSCALE_EXPERIMENT_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "twoscale/coefficients.hpp"

namespace twoscale {

/// One named pass/fail check in a report, traceable to the stage and the
/// tolerance that produced it.
struct Verdict {
    std::string name;
    std::string stage;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
};

/// One row of the epsilon-sweep table.
struct SweepRow {
    double eps = 0.0;
    double h_fine = 0.0;
    double r1 = 0.0;
    double r2 = 0.0;
    double r3 = 0.0;
    double e_u = 0.0;
    double e_xi = 0.0;
    int iterations = 0;
    double residual = 0.0;
};

/// Serialize sweep rows with the fixed column set
/// eps,h_fine,r1,r2,r3,e_u,e_xi,iterations,residual at %.12g precision
/// (byte-stable across reruns of an identical config).
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

/// Staged experiment pipeline over one configuration. Stages are
/// validate | kernel | correctors | homogenize | sweep | compare | run;
/// each writes its JSON/CSV artifacts under the output directory and later
/// stages load the cached artifacts of earlier ones (missing caches raise a
/// ConfigError naming the stage to run first).
class Experiment {
public:
    Experiment(ProblemConfig cfg, std::filesystem::path out_dir);

    /// Execute one stage (or the whole pipeline for "run"); returns the
    /// process exit code: 0 iff every verdict recorded so far passes.
    int run_stage(const std::string& stage);

    const std::vector<Verdict>& verdicts() const { return verdicts_; }
    const ProblemConfig& config() const { return cfg_; }
    std::filesystem::path corrector_cache_path() const;

private:
    void stage_validate(nlohmann::json& report);
    void stage_kernel(nlohmann::json& report);
    void stage_correctors(nlohmann::json& report);
    void stage_homogenize(nlohmann::json& report);
    void stage_sweep(nlohmann::json& report);
    void stage_compare(nlohmann::json& report);

    void record(const std::string& stage, const std::string& name, bool pass,
                double value, double threshold);
    void require_cache(const std::filesystem::path& file,
                       const std::string& producer_stage) const;

    ProblemConfig cfg_;
    std::filesystem::path out_;
    std::vector<Verdict> verdicts_;
};

} // namespace twoscale

#endif
