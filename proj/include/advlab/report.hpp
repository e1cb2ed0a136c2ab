#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advlab/experiments.hpp"

namespace advlab {

using nlohmann::json;

// Doubles are written with the shortest representation that parses back to
// the same bits; non-finite values are written as the strings "nan", "inf"
// and "-inf".
json number_to_json(double v);
double number_from_json(const json& j);

void to_json(json& j, const ModelSpec& v);
void from_json(const json& j, ModelSpec& v);
void to_json(json& j, const SyntheticSpec& v);
void from_json(const json& j, SyntheticSpec& v);
void to_json(json& j, const PerturbationSet& v);
void from_json(const json& j, PerturbationSet& v);
void to_json(json& j, const AttackConfig& v);
void from_json(const json& j, AttackConfig& v);
void to_json(json& j, const StepSchedule& v);
void from_json(const json& j, StepSchedule& v);
void to_json(json& j, const TrainConfig& v);
void from_json(const json& j, TrainConfig& v);
void to_json(json& j, const ExperimentConfig& v);
void from_json(const json& j, ExperimentConfig& v);
void to_json(json& j, const Checkpoint& v);
void from_json(const json& j, Checkpoint& v);
void to_json(json& j, const ConstantEstimates& v);
void from_json(const json& j, ConstantEstimates& v);
void to_json(json& j, const BoundReport& v);
void from_json(const json& j, BoundReport& v);
void to_json(json& j, const GapReport& v);
void from_json(const json& j, GapReport& v);
void to_json(json& j, const GapTrend& v);
void to_json(json& j, const MeanSd& v);

/// Overlays the keys present in `patch` onto an existing configuration, so a
/// partial config file only changes what it names.
ExperimentConfig config_from_json(const json& patch, ExperimentConfig base = {});

enum class ReportFormat { Json, Csv };

/// json: report.json with config echo, constants, bounds and checkpoints,
/// plus `summary` when given. csv: trace.csv (one row per checkpoint per
/// trial) and plotdata_*.csv files with (series, x, mean, stderr) columns.
/// Returns the paths written.
std::vector<std::filesystem::path> emit_report(const std::vector<GapReport>& reports,
                                               ReportFormat format,
                                               const std::filesystem::path& dir,
                                               const json& summary = json::object());

std::vector<GapReport> read_report(const std::filesystem::path& file);

void write_json_file(const std::filesystem::path& file, const json& j);

}  // namespace advlab
