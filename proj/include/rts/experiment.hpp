// Experiment orchestration behind the command-line tool: strict config
// ingestion, the math self-check battery, train/eval/sweep drivers, and
// report emission.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rts/datasynth.hpp"
#include "rts/trainer.hpp"

namespace rts::cli {

inline constexpr const char* kCodeVersion = "rts-0.1.0";

// Exit codes: distinct causes get distinct codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitMathCheckFailed = 3;
inline constexpr int kExitDivergence = 4;

struct ExperimentConfig {
    std::uint64_t seed = 1;  // required in config files
    std::string out_dir = "runs/out";
    datasynth::DataConfig data;
    std::string dataset_file;  // optional import path; empty = generate
    trainer::TrainConfig train;

    // eval options
    double fmr_target = 0.001;
    std::size_t max_pairs = 5000;
    double reject_fraction_max = 0.5;
    double reject_fraction_step = 0.05;
    std::vector<datasynth::NoiseKind> noise_kinds{
        datasynth::NoiseKind::Additive, datasynth::NoiseKind::SaltPepper,
        datasynth::NoiseKind::Maskout, datasynth::NoiseKind::Mixup};
    // Graded analogues of the paper's mild blur radii: the sweep has to
    // start near the cluster scale or every level saturates the score.
    // Valid for every kind (maskout rejects level 1: nothing left).
    std::vector<double> noise_levels{0.02, 0.1, 0.3, 0.9};
};

// Strict parsing: unknown keys and missing required keys are errors that
// name the key. Round-trips losslessly through serialize_config.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);  // canonical JSON

// Thrown for malformed configs; the CLI maps it to kExitConfigError.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// --- verify-math battery -----------------------------------------------------
struct CheckResult {
    std::string name;
    bool pass = false;
    double margin = 0.0;    // how far inside (positive) or outside the bound
    std::string detail;
};

struct VerifyMathReport {
    std::vector<CheckResult> checks;
    bool all_pass() const;
    std::string to_text() const;  // deterministic bytes for a given seed
};

// `inject_gradient_fault` corrupts one analytic gradient before comparison
// (test hook: the battery must then fail on the named check).
VerifyMathReport run_verify_math(std::uint64_t seed, bool inject_gradient_fault = false);

// --- drivers ------------------------------------------------------------------
// Each driver writes its artifacts plus config_echo.json and report.json
// under `out_dir` and returns the report JSON text.

struct TrainOutcome {
    bool diverged = false;
    std::string checkpoint_path;
    std::string epochs_csv_path;
};
TrainOutcome run_train(const ExperimentConfig& cfg, const std::string& out_dir);

enum class EvalMode { Ood, Reject, VerifyPairs, NoiseCurve };
EvalMode eval_mode_from_name(const std::string& name);
const char* eval_mode_name(EvalMode m);

void run_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path, EvalMode mode,
              const std::string& out_dir);

enum class SweepAxis { Lambda, Delta };
SweepAxis sweep_axis_from_name(const std::string& name);

void run_sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::string& out_dir);

void run_gen_data(const ExperimentConfig& cfg, const std::string& out_path);

// Dataset helper shared by the drivers: import when dataset_file is set,
// otherwise generate deterministically from the config seed.
datasynth::Dataset load_or_generate_dataset(const ExperimentConfig& cfg);

// FNV-1a over the exported dataset text; sweeps use it to prove all members
// saw identical data.
std::uint64_t dataset_hash(const datasynth::Dataset& ds);

}  // namespace rts::cli
