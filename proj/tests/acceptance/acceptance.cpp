// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any
// criterion fails. Every check runs offline.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dmad/metrics.hpp"
#include "dmad/mock.hpp"
#include "dmad/pipeline.hpp"
#include "dmad/report.hpp"
#include "support.hpp"

using namespace dmad;
using dmad::testing::TempDir;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<Verdict()> check;
};

// --- HTER identity ----------------------------------------------------------

Verdict hter_identity() {
  struct Row {
    double macer, bpcer, hter;
  };
  const Row rows[] = {{43.00, 0.00, 21.50}, {7.00, 0.00, 3.50},   {0.00, 0.00, 0.00},
                      {8.00, 38.00, 23.00}, {6.00, 38.00, 22.00}, {13.00, 38.00, 25.50}};
  int bad = 0;
  for (const Row& r : rows) {
    if (compute_hter(r.macer, r.bpcer) != r.hter) ++bad;
    if (fixed2(compute_hter(r.macer, r.bpcer)) != fixed2(r.hter)) ++bad;
  }
  // Every row the engine emits for a seeded mock run obeys the identity too.
  TempDir tmp("dmad-acc-hter");
  RunOptions o;
  o.runs_dir = tmp.path();
  o.run_id = "hter";
  o.manifest = testing::paper_scale_manifest(11);
  o.mock.seed = 11;
  o.mock.failure_rate = 0.1;
  o.mock.round_agreement = 0.5;
  const RunSummary s = execute_run(o);
  int emitted = 0;
  for (const auto& row : breakdown(s.outcomes, {Question::Q2}).rows) {
    for (const auto& [c, r] : row.rates) {
      ++emitted;
      if (r.hter != (r.macer + r.bpcer) / 2) ++bad;
    }
  }
  return {bad == 0, "6 published rows + " + std::to_string(emitted) + " emitted rows, " + std::to_string(bad) +
                        " mismatches"};
}

// --- fixture-log reproduction ---------------------------------------------

Verdict fixture_reproduction() {
  TempDir tmp("dmad-acc-fixture");
  testing::TableSpec gpt;
  gpt.provider = ProviderKind::OpenAI;
  gpt.missed_morphs = {{MorphType::LMA, 43}, {MorphType::PIPE, 7}, {MorphType::MIPGAN2, 0}};
  gpt.flagged_bona_fide = 0;
  testing::TableSpec gemini;
  gemini.provider = ProviderKind::Gemini;
  gemini.missed_morphs = {{MorphType::LMA, 8}, {MorphType::PIPE, 6}, {MorphType::MIPGAN2, 13}};
  gemini.flagged_bona_fide = 19;
  testing::write_table_fixture(tmp.path(), "table-gpt", gpt);
  testing::write_table_fixture(tmp.path(), "table-gemini", gemini);

  std::vector<PairOutcome> outcomes;
  for (const char* id : {"table-gpt", "table-gemini"}) {
    const ReplayResult r = replay(tmp.path(), id);
    outcomes.insert(outcomes.end(), r.outcomes.begin(), r.outcomes.end());
  }
  const std::string got = error_rates_csv(breakdown(outcomes, {Question::Q2}));

  std::string want = std::string(kErrorRatesCsvHeader) + "\n";
  auto rows = [&](const std::string& provider, const char* type, const char* macer, const char* bpcer,
                  const char* hter) {
    for (const char* conv : {"FailuresAsErrors", "FailuresExcluded"}) {
      want += provider + "," + type + "," + conv + "," + macer + "," + macer + "," + bpcer + "," + hter +
              ",100,50,0.00\n";
    }
  };
  rows("openai", "LMA", "43.00", "0.00", "21.50");
  rows("openai", "MIPGAN2", "0.00", "0.00", "0.00");
  rows("openai", "PIPE", "7.00", "0.00", "3.50");
  rows("gemini", "LMA", "8.00", "38.00", "23.00");
  rows("gemini", "MIPGAN2", "13.00", "38.00", "25.50");
  rows("gemini", "PIPE", "6.00", "38.00", "22.00");

  if (got == want) return {true, "12 CSV rows byte-identical (2 providers x 3 morph types x 2 conventions)"};
  return {false, "CSV differs:\n--- expected\n" + want + "--- got\n" + got};
}

// --- parser corpus and fuzz ---------------------------------------------------

Verdict parser_corpus() {
  std::ifstream in(testing::fixture_dir() / "parser_corpus.json");
  const json corpus = json::parse(in);
  int agree = 0, total = 0;
  std::set<std::string> scenarios;
  std::string first_miss;
  auto opt = [](const json& j) { return j.is_null() ? std::optional<int>() : std::optional<int>(j.get<int>()); };
  for (const auto& e : corpus.at("entries")) {
    ++total;
    const RoundResult r = parse_transcript(e.at("text").get<std::string>());
    const json& x = e.at("expected");
    scenarios.insert(x.at("scenario").get<std::string>());
    const bool ok = to_string(r.scenario) == x.at("scenario").get<std::string>() &&
                    to_string(r.q1.answer) == x.at("q1").at("answer").get<std::string>() &&
                    to_string(r.q2.answer) == x.at("q2").at("answer").get<std::string>() &&
                    r.q1.probability == opt(x.at("q1").at("probability")) &&
                    r.q2.probability == opt(x.at("q2").at("probability"));
    if (ok) {
      ++agree;
    } else if (first_miss.empty()) {
      first_miss = e.at("id").get<std::string>();
    }
  }

  // Fuzz: half pure random bytes, half corpus entries with random byte edits.
  std::mt19937_64 rng(0xD3AD);
  std::vector<std::string> seeds;
  for (const auto& e : corpus.at("entries")) seeds.push_back(e.at("text").get<std::string>());
  int exceptions = 0, out_of_range = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    if (i % 2 == 0) {
      s.resize(rng() % 2048);
      for (auto& c : s) c = static_cast<char>(rng() & 0xFF);
    } else {
      s = seeds[rng() % seeds.size()];
      const int edits = 1 + static_cast<int>(rng() % 16);
      for (int k = 0; k < edits && !s.empty(); ++k) s[rng() % s.size()] = static_cast<char>(rng() & 0xFF);
    }
    try {
      const RoundResult r = parse_transcript(s);
      for (const ParsedAnswer* a : {&r.q1, &r.q2}) {
        if (a->probability && (*a->probability < 0 || *a->probability > 100)) ++out_of_range;
      }
    } catch (...) {
      ++exceptions;
    }
  }
  const bool pass = agree == total && total >= 12 && scenarios.size() == 5 && exceptions == 0 && out_of_range == 0;
  std::string detail = std::to_string(agree) + "/" + std::to_string(total) + " labelled transcripts agree, " +
                       std::to_string(scenarios.size()) + "/5 scenarios covered; fuzz 10000 inputs, " +
                       std::to_string(exceptions) + " exceptions";
  if (!first_miss.empty()) detail += "; first disagreement: " + first_miss;
  return {pass, detail};
}

// --- protocol counts ---------------------------------------------------------

Verdict protocol_counts() {
  const ProtocolManifest a = testing::paper_scale_manifest(2024);
  const ProtocolManifest b = testing::paper_scale_manifest(2024);
  const bool counts = a.bona_fide_pair_count == 50 && a.counts.at(MorphType::LMA) == 50 &&
                      a.counts.at(MorphType::MIPGAN2) == 50 && a.counts.at(MorphType::PIPE) == 50;
  const bool same = a.pairs == b.pairs && manifest_digest(a) == manifest_digest(b);
  const bool valid = validate_protocol(a).empty();
  std::ostringstream d;
  d << "BF " << a.bona_fide_pair_count << ", LMA " << a.counts.at(MorphType::LMA) << ", MIPGAN2 "
    << a.counts.at(MorphType::MIPGAN2) << ", PIPE " << a.counts.at(MorphType::PIPE) << "; repeat build "
    << (same ? "identical" : "DIFFERENT") << "; " << validate_protocol(a).size() << " violations";
  return {counts && same && valid, d.str()};
}

// --- fusion properties ---------------------------------------------------------

Verdict fusion_properties() {
  struct Cell {
    Answer a;
    std::optional<int> score;
  };
  const std::array<Cell, 5> cells = {{{Answer::Yes, 90}, {Answer::Yes, {}}, {Answer::No, 20}, {Answer::No, {}},
                                      {Answer::Absent, {}}}};
  auto rank = [](Answer a) { return a == Answer::Yes ? 2 : a == Answer::No ? 1 : 0; };
  auto make = [](const std::array<Cell, 3>& c, Question q) {
    std::vector<RoundResult> rounds;
    for (int k = 0; k < 3; ++k) {
      RoundResult r;
      r.pair_id = "p";
      r.round_index = k + 1;
      ParsedAnswer pa{c[k].a, c[k].a == Answer::Absent ? std::nullopt : c[k].score, {}};
      (q == Question::Q1 ? r.q1 : r.q2) = pa;
      rounds.push_back(r);
    }
    return rounds;
  };
  const FusionPolicy policies[] = {FusionPolicy{},
                                   FusionPolicy{FusionPolicy::DecisionRule::Majority},
                                   FusionPolicy{FusionPolicy::DecisionRule::All},
                                   FusionPolicy{FusionPolicy::DecisionRule::LogicalOr,
                                                FusionPolicy::ScoreRule::MeanOfPresent,
                                                FusionPolicy::FailureHandling::TreatAsError}};
  int states = 0, perm_violations = 0, mono_violations = 0;
  const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (Question q : {Question::Q1, Question::Q2}) {
    for (const Cell& x : cells) {
      for (const Cell& y : cells) {
        for (const Cell& z : cells) {
          ++states;
          const std::array<Cell, 3> base{x, y, z};
          for (const auto& policy : policies) {
            const PairOutcome ref = fuse(make(base, q), policy, GroundTruth::MorphPair);
            for (const auto& p : perms) {
              const PairOutcome o =
                  fuse(make({base[p[0]], base[p[1]], base[p[2]]}, q), policy, GroundTruth::MorphPair);
              if (o.fused(q) != ref.fused(q) || o.mean_score(q) != ref.mean_score(q)) ++perm_violations;
            }
          }
          // OR monotonicity: raising any single round never lowers the verdict.
          const FusedDecision f = fuse(make(base, q), FusionPolicy{}, GroundTruth::MorphPair).fused(q);
          for (int k = 0; k < 3; ++k) {
            for (const Cell& up : cells) {
              if (rank(up.a) < rank(base[k].a)) continue;
              auto raised = base;
              raised[k] = up;
              const FusedDecision g = fuse(make(raised, q), FusionPolicy{}, GroundTruth::MorphPair).fused(q);
              if (f == FusedDecision::Yes && g != FusedDecision::Yes) ++mono_violations;
              if (f == FusedDecision::No && g == FusedDecision::AllFailed) ++mono_violations;
            }
          }
        }
      }
    }
  }
  return {perm_violations == 0 && mono_violations == 0,
          std::to_string(states) + " states (125 per question), 4 policies x 6 orderings: " +
              std::to_string(perm_violations) + " permutation and " + std::to_string(mono_violations) +
              " OR-monotonicity violations"};
}

// --- metrics oracle ------------------------------------------------------------

// Brute-force recount straight from log.jsonl: regex out each round's Q2
// answer, OR the rounds, count errors per class.
struct Recount {
  std::map<MorphType, std::pair<int, int>> morph;  // errors, denominator (failures as errors)
  std::map<MorphType, std::pair<int, int>> morph_excl;
  std::pair<int, int> bf{0, 0}, bf_excl{0, 0};
};

Recount recount(const std::filesystem::path& log_path) {
  static const std::regex q2(
      R"(Q2(?:\s*Answer:\**|\)[^\n]*\n\s*Answer:)\s*(Yes|No)\b)");
  struct Pair {
    std::string truth;
    std::string type;
    std::map<int, std::string> answers;
  };
  std::map<std::string, Pair> pairs;
  std::ifstream in(log_path);
  for (std::string line; std::getline(in, line);) {
    const json j = json::parse(line);
    const std::string kind = j["record_kind"];
    Pair& p = pairs[j["pair_id"]];
    if (kind == "Request") {
      p.truth = j["payload"]["ground_truth"];
      p.type = j["payload"]["morph_type"].is_null() ? "" : j["payload"]["morph_type"].get<std::string>();
    } else if (kind == "Transcript") {
      std::smatch m;
      const std::string text = j["payload"]["text"];
      p.answers[j["round_index"]] = std::regex_search(text, m, q2) ? m[1].str() : "";
    } else if (kind == "Error") {
      p.answers[j["round_index"]] = "";
    }
  }
  Recount r;
  for (const auto& [id, p] : pairs) {
    bool any_yes = false, any_answer = false;
    for (const auto& [k, a] : p.answers) {
      any_yes |= a == "Yes";
      any_answer |= !a.empty();
    }
    const bool morph = p.truth == "MorphPair";
    const bool error = morph ? !any_yes : any_yes;
    auto& all = morph ? r.morph[parse_morph_type(p.type)] : r.bf;
    auto& excl = morph ? r.morph_excl[parse_morph_type(p.type)] : r.bf_excl;
    all.second += 1;
    all.first += (!any_answer || error) ? 1 : 0;
    if (any_answer) {
      excl.second += 1;
      excl.first += error ? 1 : 0;
    }
  }
  return r;
}

Verdict metrics_oracle() {
  TempDir tmp("dmad-acc-oracle");
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> unit(0, 1);
  int runs = 0, compared = 0, mismatches = 0;
  const FailureStyle styles[] = {FailureStyle::Refusal, FailureStyle::GuidanceProxy, FailureStyle::Base64Echo};
  for (int i = 0; i < 50; ++i) {
    RunOptions o;
    o.runs_dir = tmp.path();
    o.run_id = "oracle-" + std::to_string(i);
    o.manifest = testing::paper_scale_manifest(static_cast<std::uint64_t>(i));
    o.mock.seed = static_cast<std::uint64_t>(1000 + i);
    o.mock.q2_yes_rate = {{GroundTruth::BonaFidePair, 0.3 * unit(rng)}, {GroundTruth::MorphPair, unit(rng)}};
    o.mock.q2_yes_rate_by_morph_type = {{MorphType::PIPE, unit(rng)}};
    o.mock.failure_rate = 0.4 * unit(rng);
    o.mock.failure_style = styles[i % 3];
    o.mock.round_agreement = unit(rng);
    o.mock.disclaimer_rate = 0.2;
    o.mock.score_omit_rate = 0.1;
    const RunSummary s = execute_run(o);
    ++runs;
    const Recount truth = recount(run_paths(tmp.path(), o.run_id).log);
    const Breakdown b = breakdown(load_outcomes(tmp.path(), o.run_id), {Question::Q2});
    for (const auto& row : b.rows) {
      for (const auto& [conv, rates] : row.rates) {
        const auto& m = conv == Convention::FailuresAsErrors ? truth.morph.at(row.morph_type)
                                                             : truth.morph_excl.at(row.morph_type);
        const auto& bf = conv == Convention::FailuresAsErrors ? truth.bf : truth.bf_excl;
        ++compared;
        if (rates.macer != 100.0 * m.first / m.second || rates.bpcer != 100.0 * bf.first / bf.second ||
            rates.n_morph_pairs != m.second || rates.n_bf_pairs != bf.second) {
          ++mismatches;
        }
      }
    }
    if (s.outcomes.size() != 200) ++mismatches;
  }
  return {mismatches == 0 && compared > 0, std::to_string(runs) + " runs, " + std::to_string(compared) +
                                               " (type, convention) rows vs regex recount, " +
                                               std::to_string(mismatches) + " mismatches"};
}

// --- KDE contracts -------------------------------------------------------------

Verdict kde_contracts() {
  std::mt19937_64 rng(77);
  double worst_mass = 0;
  for (int n : {2, 3, 4, 5, 8, 13, 21, 50, 100, 300}) {
    for (int rep = 0; rep < 5; ++rep) {
      std::normal_distribution<double> d(20.0 + 15.0 * rep, 5.0 + 5.0 * rep);
      std::vector<double> v(static_cast<std::size_t>(n));
      for (auto& x : v) x = d(rng);
      if (*std::min_element(v.begin(), v.end()) == *std::max_element(v.begin(), v.end())) v[0] += 1;
      const KDECurve c = kde_estimate(v);
      worst_mass = std::max(worst_mass, std::abs(trapezoid(c.support_grid, c.support_density) - 1.0));
    }
  }

  double worst_asym = 0;
  for (int rep = 0; rep < 10; ++rep) {
    std::uniform_real_distribution<double> u(0, 50);
    std::vector<double> v;
    for (int k = 0; k < 10 + rep; ++k) {
      const double x = u(rng);
      v.push_back(50 - x);
      v.push_back(50 + x);
    }
    const KDECurve c = kde_estimate(v, KdeOptions{257});
    const double h = c.bandwidth;
    for (std::size_t i = 0; i < c.density.size(); ++i) {
      worst_asym = std::max(worst_asym, std::abs(c.density[i] - c.density[c.density.size() - 1 - i]));
    }
    for (double off = 0; off < 60; off += 0.37) {
      worst_asym = std::max(worst_asym, std::abs(gaussian_kde_at(v, h, 50 + off) - gaussian_kde_at(v, h, 50 - off)));
    }
  }

  std::normal_distribution<double> lo(25, 4), hi(75, 4);
  std::vector<double> two;
  for (int k = 0; k < 60; ++k) {
    two.push_back(lo(rng));
    two.push_back(hi(rng));
  }
  const KDECurve c = kde_estimate(two);
  int modes = 0;
  for (std::size_t i = 1; i + 1 < c.density.size(); ++i) {
    if (c.density[i] > c.density[i - 1] && c.density[i] >= c.density[i + 1]) ++modes;
  }
  std::ostringstream d;
  d << "max |mass-1| " << worst_mass << " (tol 1e-3), max asymmetry " << worst_asym << " (tol 1e-9), modes "
    << modes << " (want 2)";
  return {worst_mass <= 1e-3 && worst_asym <= 1e-9 && modes == 2, d.str()};
}

// --- end-to-end -----------------------------------------------------------------

Verdict end_to_end() {
  TempDir tmp("dmad-acc-e2e");
  RunOptions o;
  o.runs_dir = tmp.path();
  o.run_id = "e2e";
  o.manifest = testing::paper_scale_manifest(20240601);
  o.mock.seed = 20240601;
  o.mock.q2_yes_rate = {{GroundTruth::BonaFidePair, 0.0}, {GroundTruth::MorphPair, 0.57}};

  std::mt19937_64 rng(20240601);
  const std::size_t interrupt_at = 1 + rng() % 598;
  o.stop_after = interrupt_at;
  const RunSummary first = execute_run(o);
  const auto log_path = run_paths(tmp.path(), "e2e").log;
  // A crash mid-write leaves a torn last line.
  std::ofstream(log_path, std::ios::app) << R"({"schema_version":1,"record_kind":"Transcript","run_id":"e2e","pa)";

  o.stop_after.reset();
  const RunSummary second = execute_run(o);

  const LogScan scan = read_log(log_path);
  std::set<std::pair<std::string, int>> keys;
  int transcripts = 0;
  for (const auto& r : scan.records) {
    if (r.kind != RecordKind::Transcript) continue;
    ++transcripts;
    keys.insert({r.pair_id, *r.round_index});
  }
  std::vector<PairOutcome> morphs, bona_fide;
  for (const auto& out : second.outcomes) {
    (out.ground_truth == GroundTruth::MorphPair ? morphs : bona_fide).push_back(out);
  }
  const double macer = morphs.empty() ? -1 : compute_macer(morphs, Convention::FailuresAsErrors);
  const double bpcer = bona_fide.empty() ? -1 : compute_bpcer(bona_fide, Convention::FailuresAsErrors);

  std::ostringstream per_type;
  for (const auto& row : breakdown(second.outcomes, {Question::Q2}).rows) {
    per_type << " " << to_string(row.morph_type) << " " << fixed2(row.rates.at(Convention::FailuresAsErrors).macer);
  }
  const bool pass = first.interrupted && !second.interrupted && transcripts == 600 && keys.size() == 600 &&
                    second.outcomes.size() == 200 && std::abs(macer - 43.0) <= 7.0 && bpcer == 0.0;
  std::ostringstream d;
  d << "interrupted after " << interrupt_at << " rounds, resumed " << second.rounds_dispatched << "; "
    << transcripts << " transcript records (" << keys.size() << " distinct), " << scan.corrupt_lines
    << " torn line skipped; MACER " << fixed2(macer) << " (target 43 +/- 7), BPCER " << fixed2(bpcer)
    << "; per type:" << per_type.str();
  return {pass, d.str()};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"HTER identity", 1, hter_identity},
      {"Fixture-log reproduction", 5, fixture_reproduction},
      {"Parser corpus and fuzz totality", 30, parser_corpus},
      {"Protocol counts", 1, protocol_counts},
      {"Fusion properties", 1, fusion_properties},
      {"Metrics oracle", 60, metrics_oracle},
      {"KDE contracts", 10, kde_contracts},
      {"End-to-end mock run with resume", 120, end_to_end},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) {
      v.pass = false;
      v.detail += "; over time budget";
    }
    if (!v.pass) ++failed;
    std::printf("[%s] %s: %s (%.2fs, budget %.0fs)\n", v.pass ? "PASS" : "FAIL", c.name.c_str(), v.detail.c_str(),
                secs, c.budget_seconds);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
