#include "dmad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dmad {

std::string_view to_string(Convention c) {
  return c == Convention::FailuresAsErrors ? "FailuresAsErrors" : "FailuresExcluded";
}

std::string_view to_string(ScoreLabel l) {
  return l == ScoreLabel::BonaFideScores ? "BonaFideScores" : "MorphScores";
}

namespace {

// Percentage of outcomes whose fused Q2 decision counts as an error.
double error_percent(std::span<const PairOutcome> outcomes, Convention convention, GroundTruth expected,
                     const char* what) {
  if (outcomes.empty()) throw MetricsError(std::string(what) + ": no outcomes");
  int errors = 0;
  int denominator = 0;
  for (const auto& o : outcomes) {
    if (o.ground_truth != expected) {
      throw MetricsError(std::string(what) + ": pair '" + o.pair_id + "' has ground truth " +
                         std::string(to_string(o.ground_truth)));
    }
    if (o.fused_q2 == FusedDecision::AllFailed) {
      if (convention == Convention::FailuresExcluded) continue;
      ++errors;
      ++denominator;
      continue;
    }
    ++denominator;
    const bool flagged = o.fused_q2 == FusedDecision::Yes;
    if (expected == GroundTruth::MorphPair ? !flagged : flagged) ++errors;
  }
  if (denominator == 0) throw MetricsError(std::string(what) + ": every pair failed to answer");
  return 100.0 * errors / denominator;
}

int denominator(std::span<const PairOutcome> outcomes, Convention convention) {
  if (convention == Convention::FailuresAsErrors) return static_cast<int>(outcomes.size());
  return static_cast<int>(std::count_if(outcomes.begin(), outcomes.end(), [](const PairOutcome& o) {
    return o.fused_q2 != FusedDecision::AllFailed;
  }));
}

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return s;
}

// Linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double compute_macer(std::span<const PairOutcome> morph_outcomes, Convention convention) {
  return error_percent(morph_outcomes, convention, GroundTruth::MorphPair, "MACER");
}

double compute_bpcer(std::span<const PairOutcome> bona_fide_outcomes, Convention convention) {
  return error_percent(bona_fide_outcomes, convention, GroundTruth::BonaFidePair, "BPCER");
}

double compute_hter(double macer, double bpcer) {
  auto in_range = [](double v) { return v >= 0.0 && v <= 100.0; };
  if (!in_range(macer) || !in_range(bpcer)) throw MetricsError("HTER: rates must lie in [0, 100]");
  return (macer + bpcer) / 2.0;
}

ErrorRates error_rates(std::span<const PairOutcome> morph_outcomes, std::span<const PairOutcome> bona_fide_outcomes,
                       Convention convention) {
  ErrorRates r;
  r.convention = convention;
  r.macer = compute_macer(morph_outcomes, convention);
  r.bpcer = compute_bpcer(bona_fide_outcomes, convention);
  r.hter = compute_hter(r.macer, r.bpcer);
  r.n_morph_pairs = denominator(morph_outcomes, convention);
  r.n_bf_pairs = denominator(bona_fide_outcomes, convention);
  int failed = 0;
  for (auto span : {morph_outcomes, bona_fide_outcomes}) {
    failed += static_cast<int>(std::count_if(span.begin(), span.end(), [](const PairOutcome& o) {
      return o.fused_q2 == FusedDecision::AllFailed;
    }));
  }
  r.failure_to_answer_rate =
      100.0 * failed / static_cast<double>(morph_outcomes.size() + bona_fide_outcomes.size());
  if (!morph_outcomes.empty()) {
    r.provider = morph_outcomes.front().provider;
    if (morph_outcomes.front().morph_type) r.morph_type = *morph_outcomes.front().morph_type;
  }
  return r;
}

double silverman_bandwidth(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw KdeError(KdeError::Kind::TooFewSamples, "KDE needs at least two samples");
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  double ss = 0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0)) throw KdeError(KdeError::Kind::ZeroSpread, "KDE samples have zero spread");
  const auto sorted = sorted_copy(samples);
  const double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
  const double spread = iqr > 0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

double gaussian_kde_at(std::span<const double> samples, double bandwidth, double x) {
  const double norm = 1.0 / (static_cast<double>(samples.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  double sum = 0;
  for (double s : samples) {
    const double z = (x - s) / bandwidth;
    sum += std::exp(-0.5 * z * z);
  }
  return sum * norm;
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
  double area = 0;
  for (std::size_t i = 1; i < x.size() && i < y.size(); ++i) area += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return area;
}

KDECurve kde_estimate(std::span<const double> scores, const KdeOptions& options, ScoreLabel label,
                      Question question) {
  if (scores.size() < 2) throw KdeError(KdeError::Kind::TooFewSamples, "KDE needs at least two samples");
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  if (*lo_it == *hi_it) throw KdeError(KdeError::Kind::ZeroSpread, "KDE samples have zero spread");
  if (options.grid_points < 2) throw KdeError(KdeError::Kind::TooFewSamples, "KDE grid needs two points");

  KDECurve c;
  c.label = label;
  c.question = question;
  c.n_samples = static_cast<int>(scores.size());
  c.bandwidth = options.bandwidth.value_or(silverman_bandwidth(scores));
  if (!(c.bandwidth > 0)) throw KdeError(KdeError::Kind::ZeroSpread, "KDE bandwidth must be positive");

  const double h = c.bandwidth;
  const double lo = *lo_it - options.padding_bandwidths * h;
  const double hi = *hi_it + options.padding_bandwidths * h;
  const auto fine = static_cast<std::size_t>(std::ceil((hi - lo) / (h / 4.0))) + 1;
  const std::size_t n_support = std::clamp<std::size_t>(fine, static_cast<std::size_t>(options.grid_points), 200000);
  c.support_grid.resize(n_support);
  c.support_density.resize(n_support);
  for (std::size_t i = 0; i < n_support; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_support - 1);
    c.support_grid[i] = x;
    c.support_density[i] = gaussian_kde_at(scores, h, x);
  }

  const auto n_export = static_cast<std::size_t>(options.grid_points);
  c.grid.resize(n_export);
  c.density.resize(n_export);
  for (std::size_t i = 0; i < n_export; ++i) {
    const double x = 100.0 * static_cast<double>(i) / static_cast<double>(n_export - 1);
    c.grid[i] = x;
    c.density[i] = gaussian_kde_at(scores, h, x);
  }
  return c;
}

namespace {

std::vector<double> score_samples(const std::vector<const PairOutcome*>& outcomes, Question q, bool per_round) {
  std::vector<double> out;
  for (const PairOutcome* o : outcomes) {
    if (o->fused(q) == FusedDecision::AllFailed) continue;
    if (per_round) {
      const auto& v = q == Question::Q1 ? o->round_scores_q1 : o->round_scores_q2;
      out.insert(out.end(), v.begin(), v.end());
    } else if (auto m = o->mean_score(q)) {
      out.push_back(*m);
    }
  }
  return out;
}

ScoreDistribution distribution(std::vector<double> samples, ScoreLabel label, const BreakdownOptions& opt,
                               const std::string& context, std::vector<std::string>& warnings) {
  ScoreDistribution d;
  d.samples = std::move(samples);
  try {
    d.curve = kde_estimate(d.samples, opt.kde, label, opt.question);
  } catch (const KdeError& e) {
    if (e.kind() == KdeError::Kind::ZeroSpread) {
      d.point_mass = d.samples.front();
      warnings.push_back(context + ": all " + std::to_string(d.samples.size()) + " scores equal " +
                         std::to_string(d.samples.front()) + "; reported as a point mass");
    } else {
      warnings.push_back(context + ": " + e.what() + " (" + std::to_string(d.samples.size()) + " samples)");
    }
  }
  return d;
}

}  // namespace

Breakdown breakdown(std::span<const PairOutcome> outcomes, const BreakdownOptions& options) {
  Breakdown b;
  std::vector<std::string> providers;
  for (const auto& o : outcomes) {
    if (std::find(providers.begin(), providers.end(), o.provider) == providers.end()) providers.push_back(o.provider);
  }

  for (const auto& provider : providers) {
    std::vector<const PairOutcome*> bona_fide;
    std::map<MorphType, std::vector<const PairOutcome*>> morphs;
    ProviderSummary summary{provider, 0, 0, 0.0, false};
    for (const auto& o : outcomes) {
      if (o.provider != provider) continue;
      ++summary.pairs;
      if (o.fused_q2 == FusedDecision::AllFailed) ++summary.all_failed;
      if (o.ground_truth == GroundTruth::BonaFidePair) {
        bona_fide.push_back(&o);
      } else if (o.morph_type) {
        morphs[*o.morph_type].push_back(&o);
      } else {
        b.warnings.push_back(provider + ": morph pair '" + o.pair_id + "' has no morph_type; skipped");
      }
    }
    summary.failure_to_answer_rate = summary.pairs ? 100.0 * summary.all_failed / summary.pairs : 0.0;
    summary.metrics_suppressed = summary.pairs > 0 && summary.all_failed == summary.pairs;
    b.providers.push_back(summary);
    if (summary.metrics_suppressed) {
      b.warnings.push_back(provider + ": every pair failed to answer; metrics suppressed");
      continue;
    }

    auto deref = [](const std::vector<const PairOutcome*>& v) {
      std::vector<PairOutcome> out;
      out.reserve(v.size());
      for (const auto* p : v) out.push_back(*p);
      return out;
    };
    const auto bf_values = deref(bona_fide);
    const auto bf_scores = score_samples(bona_fide, options.question, options.per_round_scores);

    for (MorphType t : kAllMorphTypes) {
      const std::string context = provider + "/" + std::string(to_string(t));
      auto it = morphs.find(t);
      if (it == morphs.end() || it->second.empty()) {
        b.warnings.push_back(context + ": no morph pairs; row omitted");
        continue;
      }
      BreakdownRow row;
      row.provider = provider;
      row.morph_type = t;
      const auto morph_values = deref(it->second);
      for (Convention c : kAllConventions) {
        try {
          ErrorRates r = error_rates(morph_values, bf_values, c);
          r.provider = provider;
          r.morph_type = t;
          row.rates.emplace(c, r);
        } catch (const MetricsError& e) {
          b.warnings.push_back(context + " (" + std::string(to_string(c)) + "): " + e.what());
        }
      }
      row.bona_fide = distribution(bf_scores, ScoreLabel::BonaFideScores, options, context + " bona fide", b.warnings);
      row.morph = distribution(score_samples(it->second, options.question, options.per_round_scores),
                               ScoreLabel::MorphScores, options, context + " morph", b.warnings);
      b.rows.push_back(std::move(row));
    }
  }
  return b;
}

std::vector<SweepPoint> threshold_sweep(std::span<const PairOutcome> morph_outcomes,
                                        std::span<const PairOutcome> bona_fide_outcomes) {
  auto scores = [](std::span<const PairOutcome> v) {
    std::vector<double> out;
    for (const auto& o : v) {
      if (o.morph_evidence_scores.empty()) continue;
      out.push_back(std::accumulate(o.morph_evidence_scores.begin(), o.morph_evidence_scores.end(), 0.0) /
                    static_cast<double>(o.morph_evidence_scores.size()));
    }
    return out;
  };
  const auto morph = scores(morph_outcomes);
  const auto bona_fide = scores(bona_fide_outcomes);
  std::vector<SweepPoint> out;
  if (morph.empty() || bona_fide.empty()) return out;
  for (int t = 0; t <= 100; ++t) {
    const auto missed = std::count_if(morph.begin(), morph.end(), [t](double s) { return s < t; });
    const auto flagged = std::count_if(bona_fide.begin(), bona_fide.end(), [t](double s) { return s >= t; });
    out.push_back({t, 100.0 * static_cast<double>(missed) / static_cast<double>(morph.size()),
                   100.0 * static_cast<double>(flagged) / static_cast<double>(bona_fide.size())});
  }
  return out;
}

}  // namespace dmad
