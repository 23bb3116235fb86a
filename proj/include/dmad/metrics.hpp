#pragma once

// ISO/IEC 30107-3 style error rates for differential morph detection, and
// kernel density estimates of the score distributions.
//
// MACER (the APCER analogue for morphs): share of morph pairs whose fused
// Q2 decision is not "morphed". BPCER: share of bona fide pairs whose fused
// Q2 decision is "morphed". HTER is their mean. All values are percentages.
//
// Pairs where every round failed are handled by convention: either counted
// as errors for their class, or dropped from numerator and denominator.

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmad/fusion.hpp"

namespace dmad {

enum class Convention : std::uint8_t { FailuresAsErrors, FailuresExcluded };
inline constexpr Convention kAllConventions[] = {Convention::FailuresAsErrors, Convention::FailuresExcluded};

std::string_view to_string(Convention c);

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ErrorRates {
  std::string provider;
  MorphType morph_type = MorphType::LMA;
  double macer = 0;
  double bpcer = 0;
  double hter = 0;
  int n_morph_pairs = 0;  // denominators actually used under the convention
  int n_bf_pairs = 0;
  double failure_to_answer_rate = 0;
  Convention convention = Convention::FailuresAsErrors;

  double apcer() const noexcept { return macer; }
};

// Throws MetricsError on empty input, a zero denominator after exclusion, or
// an outcome with the wrong ground truth.
double compute_macer(std::span<const PairOutcome> morph_outcomes, Convention convention);
double compute_bpcer(std::span<const PairOutcome> bona_fide_outcomes, Convention convention);
// Throws MetricsError when either input lies outside [0, 100].
double compute_hter(double macer, double bpcer);

ErrorRates error_rates(std::span<const PairOutcome> morph_outcomes, std::span<const PairOutcome> bona_fide_outcomes,
                       Convention convention);

// --- score distributions --------------------------------------------------

enum class ScoreLabel : std::uint8_t { BonaFideScores, MorphScores };
std::string_view to_string(ScoreLabel l);

class KdeError : public std::invalid_argument {
 public:
  enum class Kind { TooFewSamples, ZeroSpread };
  KdeError(Kind kind, const std::string& what) : std::invalid_argument(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct KdeOptions {
  int grid_points = 256;
  std::optional<double> bandwidth;  // Silverman's rule when unset
  double padding_bandwidths = 4.0;
};

struct KDECurve {
  // Export grid: grid_points evenly spaced values over [0, 100].
  std::vector<double> grid;
  std::vector<double> density;
  // Evaluation grid over [min - pad*h, max + pad*h]; its trapezoidal integral
  // is the mass check. Spacing never exceeds h/4.
  std::vector<double> support_grid;
  std::vector<double> support_density;
  double bandwidth = 0;
  int n_samples = 0;
  ScoreLabel label = ScoreLabel::BonaFideScores;
  Question question = Question::Q1;
};

// Silverman: 0.9 * min(sd, IQR/1.34) * n^(-1/5). Falls back to sd when the
// IQR is zero. Throws KdeError for n < 2 or zero spread.
double silverman_bandwidth(std::span<const double> samples);

double gaussian_kde_at(std::span<const double> samples, double bandwidth, double x);

KDECurve kde_estimate(std::span<const double> scores, const KdeOptions& options = {},
                      ScoreLabel label = ScoreLabel::BonaFideScores, Question question = Question::Q1);

double trapezoid(std::span<const double> x, std::span<const double> y);

// --- per provider / morph type -------------------------------------------

struct ScoreDistribution {
  std::vector<double> samples;
  std::optional<KDECurve> curve;
  std::optional<double> point_mass;  // set when every sample is identical
};

struct BreakdownRow {
  std::string provider;
  MorphType morph_type = MorphType::LMA;
  std::map<Convention, ErrorRates> rates;  // a convention is missing when its denominators are zero
  ScoreDistribution bona_fide;
  ScoreDistribution morph;
};

struct ProviderSummary {
  std::string provider;
  int pairs = 0;
  int all_failed = 0;
  double failure_to_answer_rate = 0;
  bool metrics_suppressed = false;  // every pair failed
};

struct BreakdownOptions {
  Question question = Question::Q1;
  bool per_round_scores = false;  // plot each round's score instead of the round mean
  KdeOptions kde;
};

struct Breakdown {
  std::vector<BreakdownRow> rows;
  std::vector<ProviderSummary> providers;
  std::vector<std::string> warnings;
};

Breakdown breakdown(std::span<const PairOutcome> outcomes, const BreakdownOptions& options = {});

// Extension beyond the fused yes/no protocol: thresholds the round-averaged
// morph evidence score (see PairOutcome::morph_evidence_scores) and reports
// the APCER/BPCER trade-off at each integer threshold 0..100. Pairs without
// any score are left out.
struct SweepPoint {
  int threshold = 0;
  double apcer = 0;
  double bpcer = 0;
};

std::vector<SweepPoint> threshold_sweep(std::span<const PairOutcome> morph_outcomes,
                                        std::span<const PairOutcome> bona_fide_outcomes);

}  // namespace dmad
