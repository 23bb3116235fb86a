#pragma once

// File renderers for `dmad metrics` and `dmad report`. Every function here
// is a pure function of its inputs: no clocks, no environment.

#include <map>
#include <string>
#include <vector>

#include "dmad/metrics.hpp"
#include "dmad/provider.hpp"
#include "dmad/gateway.hpp"
#include "dmad/run_store.hpp"

namespace dmad {

// "%.2f", with negative zero printed as 0.00.
std::string fixed2(double v);

inline constexpr std::string_view kErrorRatesCsvHeader =
    "provider,morph_type,convention,macer,apcer,bpcer,hter,n_morph_pairs,n_bf_pairs,failure_to_answer_rate";

std::string error_rates_csv_row(const ErrorRates& r);
// Header plus one row per (provider, morph type, convention) present.
std::string error_rates_csv(const Breakdown& b);

// Per provider and convention, a block of "LMA 43.00 0.00 21.50" lines
// (morph type, MACER, BPCER, HTER), followed by the warnings.
std::string summary_text(const Breakdown& b);

// score,bona_fide_density,morph_density on the export grid. A side without a
// curve is left blank; a point mass is noted in a trailing comment line.
std::string kde_csv(const BreakdownRow& row);
std::string kde_svg(const BreakdownRow& row, Question q);

std::string sweep_csv(const std::vector<SweepPoint>& points);

struct ReportInput {
  RunSnapshot snapshot;
  std::vector<PairOutcome> outcomes;
  std::vector<RoundResult> rounds;
  std::map<std::pair<std::string, int>, std::string> transcript_text;
  std::map<std::pair<std::string, int>, RoundError> errors;
  Breakdown metrics;  // Q2 breakdown is enough for the tables
  std::vector<std::string> warnings;
  int excerpts_per_class = 2;
};

// Builds the report inputs from a run directory: stored outcomes and Parsed
// records when the run finished, a replay otherwise.
ReportInput load_report_input(const std::filesystem::path& runs_dir, const std::string& run_id);

std::string render_report(const ReportInput& in);

}  // namespace dmad
