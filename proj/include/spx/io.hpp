#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spx/design.hpp"
#include "spx/inference.hpp"
#include "spx/simulation.hpp"

namespace spx {

// ---------------------------------------------------------------------------
// Historical CSV
//
// Header: trial_id,n,y,<covariate>...[,is_new]
// Lines starting with '#' and blank lines are ignored. A row with is_new=1
// supplies the new trial's covariates; its n and y may be left empty.

struct RawTrial {
    std::string id;
    int n = 0;
    int y = 0;
    std::vector<double> covariates;  // raw, no intercept
};

struct HistoricalTable {
    std::vector<std::string> covariate_names;
    std::vector<RawTrial> trials;
    std::optional<RawTrial> new_trial;
};

/// Throws DataError naming the source and row number on malformed input.
HistoricalTable parse_historical_csv(std::istream& in, const std::string& source = "<input>");
HistoricalTable read_historical_table(const std::filesystem::path& path);

struct NewTrialSpec {
    std::optional<std::vector<double>> covariates;  // raw, no intercept
    std::optional<int> y;
    std::optional<int> n;
};

/// Standardizes covariates and assembles the Dataset. Values in `spec` take
/// precedence over the table's is_new row.
Dataset build_dataset(const HistoricalTable& table, const NewTrialSpec& spec = {});

/// read_historical_table + build_dataset.
Dataset load_historical_csv(const std::filesystem::path& path, const NewTrialSpec& spec = {});

// ---------------------------------------------------------------------------
// Bundled case-study data (eleven adalimumab control arms).

std::string_view case_study_csv() noexcept;
HistoricalTable case_study_table();
/// FNV-1a 64-bit digest, used to pin the bundled fixture.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

// ---------------------------------------------------------------------------
// Run configuration (JSON, versioned, unknown keys rejected).

enum class RunMode { fit, ess, design, simulate, sweep };

struct SweepSettings {
    double rate_lo = 0.10;
    double rate_hi = 0.50;
    double rate_step = 0.02;
    int n = 75;
};

struct RunConfig {
    static constexpr int kSchemaVersion = 1;

    RunMode mode = RunMode::fit;
    std::string model = "spx";
    std::string data;
    std::string out = "spx_out";
    std::string format = "delimited";
    std::uint64_t seed = 1;
    NewTrialSpec new_trial;
    std::optional<TreatmentSummary> treatment;
    /// 1..4 selects a preset for the scenario section; 0 uses it as written.
    int scenario_id = 1;
    DesignKind design_kind = DesignKind::fixed;
    std::size_t replicates = 500;
    unsigned threads = 0;
    SweepSettings sweep;
    IndependentPrior independent_prior = IndependentPrior::uniform;

    SpxHyperParams spx;
    RmapParams rmap;
    McmcConfig mcmc;
    DesignConfig design;
    ScenarioConfig scenario;

    /// Model selector built from `model` and the matching parameter section.
    ModelSpec model_spec() const;
    /// Throws ConfigError.
    void validate() const;
};

RunMode parse_mode(const std::string& s);
const char* mode_name(RunMode m) noexcept;

/// `base_dir` resolves a relative data path.
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { table, delimited, structured };

ReportFormat parse_format(const std::string& s);

struct LabeledOc {
    std::string label;
    OperatingCharacteristics oc;
    std::vector<ReplicateRecord> replicates;
};

struct FitReport {
    std::string model;
    int y = 0;
    int n = 0;
    PosteriorSummary summary;
    std::array<double, 3> rb_weights{0.0, 0.0, 0.0};
    std::optional<double> ess;
    std::optional<InterimPlan> plan;
    std::optional<FinalAnalysis> decision;
    std::vector<BlockAcceptance> diagnostics;
};

struct Report {
    std::string title;
    std::vector<LabeledOc> oc;
    std::vector<SweepRow> sweep;
    std::optional<FitReport> fit;
};

/// Metric rows Size, RMSE, Coverage, Width, Type I, Power; one column per
/// labeled result.
void write_oc_table(std::ostream& out, const std::vector<LabeledOc>& cols);
void write_oc_csv(std::ostream& out, const std::vector<LabeledOc>& cols);
void write_replicates_csv(std::ostream& out, const std::vector<LabeledOc>& cols);
void write_sweep_table(std::ostream& out, const std::vector<SweepRow>& rows);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_fit_table(std::ostream& out, const FitReport& fit);
void write_fit_csv(std::ostream& out, const FitReport& fit);
std::string report_to_json(const Report& report);

/// Reads back write_sweep_csv output.
std::vector<SweepRow> read_sweep_csv(std::istream& in);
/// Reads back write_oc_csv output: one (label, metrics) pair per column.
std::vector<LabeledOc> read_oc_csv(std::istream& in);

/// Writes the report into `dir` (created if needed) and returns the written
/// paths. Throws RuntimeError for an empty report or a replicate-free
/// operating-characteristics column.
std::vector<std::filesystem::path> emit_report(const Report& report, ReportFormat format,
                                               const std::filesystem::path& dir, const std::string& stem);

}  // namespace spx
