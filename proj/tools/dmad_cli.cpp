// dmad: command-line entry point for the D-MAD evaluation harness.
//
// Exit codes: 0 success (a run may still contain per-pair failures, which
// are logged); 1 bad input or configuration; 2 systemic provider failure
// (credentials); 3 storage failure.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>

#include "dmad/metrics.hpp"
#include "dmad/mock.hpp"
#include "dmad/pipeline.hpp"
#include "dmad/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dmad;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct Systemic : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw RunStoreError("cannot write '" + path.string() + "'");
}

std::string default_run_id() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "run-%Y%m%d-%H%M%S", &tm);
  return buf;
}

FusionPolicy fusion_from(const std::string& rule, const std::string& failed) {
  FusionPolicy p;
  p.decision_rule = parse_decision_rule(rule);
  p.failure_handling = parse_failure_handling(failed);
  return p;
}

Convention parse_convention(const std::string& s) {
  for (Convention c : kAllConventions) {
    if (iequals(s, to_string(c))) return c;
  }
  if (iequals(s, "errors")) return Convention::FailuresAsErrors;
  if (iequals(s, "excluded")) return Convention::FailuresExcluded;
  throw ParseError("unknown convention '" + s + "'");
}

std::string slug(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '_';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dmad: differential morphing attack detection with multimodal LLMs"};
  app.set_version_flag("--version", kToolVersion);
  app.set_config("--config", "", "Read options from a TOML file (see README)");
  app.require_subcommand(1);

  std::string runs_dir = "runs";
  app.add_option("--runs-dir", runs_dir, "Directory holding run logs")->capture_default_str();

  // validate --------------------------------------------------------------
  auto* validate = app.add_subcommand("validate", "Check a manifest (and optional marker / mock files)");
  std::string v_manifest;
  std::string v_markers;
  std::string v_mock;
  validate->add_option("--manifest", v_manifest, "Protocol manifest JSON")->required();
  validate->add_option("--markers", v_markers, "Scenario marker JSON");
  validate->add_option("--mock-behavior", v_mock, "Mock behavior JSON");

  // build-protocol --------------------------------------------------------
  auto* build = app.add_subcommand("build-protocol", "Build a pair manifest from an image list");
  std::string b_images;
  std::string b_out = "manifest.json";
  std::string b_policy = "random";
  std::uint64_t b_seed = 0;
  int b_target = 50;
  int b_subjects = 54;
  int b_bf_per_subject = 2;
  int b_morphs = 50;
  bool b_synthetic = false;
  build->add_option("--images", b_images, "JSON file with an \"images\" array (manifest image schema)");
  build->add_flag("--synthetic", b_synthetic, "Use a synthetic image list instead of --images");
  build->add_option("--subjects", b_subjects, "Synthetic: subject count")->capture_default_str();
  build->add_option("--bf-per-subject", b_bf_per_subject, "Synthetic: genuine images per subject")
      ->capture_default_str();
  build->add_option("--morphs-per-type", b_morphs, "Synthetic: morphs per morph type")->capture_default_str();
  build->add_option("--policy", b_policy, "Pairing policy: random, first-two, all")->capture_default_str();
  build->add_option("--seed", b_seed, "Seed for the random policy")->capture_default_str();
  build->add_option("--target", b_target, "Number of bona fide pairs")->capture_default_str();
  build->add_option("--out", b_out, "Output manifest path")->capture_default_str();

  // run -------------------------------------------------------------------
  auto* run = app.add_subcommand("run", "Query a provider for every pair and round, then parse and fuse");
  std::string r_manifest;
  std::string r_provider = "mock";
  std::string r_model;
  std::string r_endpoint;
  std::string r_key_env;
  std::optional<double> r_temperature;
  int r_max_tokens = 2048;
  int r_rounds = 3;
  int r_concurrency = 4;
  int r_rpm = 60;
  int r_retries = 3;
  int r_backoff_ms = 2000;
  int r_timeout_s = 120;
  std::string r_mock;
  std::string r_run_id;
  std::string r_fusion = "or";
  std::string r_failed = "exclude";
  std::string r_prompt;
  std::string r_markers;
  std::string r_image_root;
  bool r_placeholder = false;
  run->add_option("--manifest", r_manifest, "Protocol manifest JSON")->required();
  run->add_option("--provider", r_provider, "openai, gemini or mock")->capture_default_str();
  run->add_option("--model", r_model, "Model name (provider default if unset)");
  run->add_option("--endpoint", r_endpoint, "Override the endpoint URL; {model} is substituted");
  run->add_option("--api-key-env", r_key_env, "Environment variable holding the API key");
  run->add_option("--temperature", r_temperature, "Sampling temperature (omitted from requests if unset)");
  run->add_option("--max-tokens", r_max_tokens, "Maximum output tokens")->capture_default_str();
  run->add_option("--rounds", r_rounds, "Independent rounds per pair")->capture_default_str();
  run->add_option("--concurrency", r_concurrency, "Requests in flight")->capture_default_str();
  run->add_option("--rpm", r_rpm, "Requests per minute")->capture_default_str();
  run->add_option("--max-retries", r_retries, "Retries on 429/5xx/timeouts")->capture_default_str();
  run->add_option("--backoff-ms", r_backoff_ms, "Base of the exponential backoff")->capture_default_str();
  run->add_option("--timeout-s", r_timeout_s, "Per-request timeout")->capture_default_str();
  run->add_option("--mock-behavior", r_mock, "Mock behavior JSON (mock provider only)");
  run->add_option("--run-id", r_run_id, "Run id; reusing one resumes that run");
  run->add_option("--fusion", r_fusion, "Round fusion rule: or, majority, all")->capture_default_str();
  run->add_option("--failed-rounds", r_failed, "exclude (default) or error")->capture_default_str();
  run->add_option("--prompt-file", r_prompt, "Replace the built-in prompt");
  run->add_option("--markers", r_markers, "Scenario marker JSON");
  run->add_option("--image-root", r_image_root, "Base directory for relative image paths (default: manifest dir)");
  run->add_flag("--placeholder-images", r_placeholder,
                "Send generated placeholder bytes instead of reading images (default for the mock)");

  // replay ----------------------------------------------------------------
  auto* rep = app.add_subcommand("replay", "Re-parse and re-fuse a run from its raw transcripts");
  std::string rp_run_id;
  std::string rp_markers;
  std::string rp_fusion;
  std::string rp_failed = "exclude";
  rep->add_option("--run-id", rp_run_id, "Run to replay")->required();
  rep->add_option("--markers", rp_markers, "Scenario marker JSON (default: the one recorded for the run)");
  rep->add_option("--fusion", rp_fusion, "Fusion rule (default: the one recorded for the run)");
  rep->add_option("--failed-rounds", rp_failed, "exclude or error (with --fusion)")->capture_default_str();

  // fuse ------------------------------------------------------------------
  auto* fuse_cmd = app.add_subcommand("fuse", "Re-fuse a run's parsed rounds under another policy");
  std::string f_run_id;
  std::string f_fusion = "or";
  std::string f_failed = "exclude";
  fuse_cmd->add_option("--run-id", f_run_id, "Run to fuse")->required();
  fuse_cmd->add_option("--fusion", f_fusion, "or, majority, all")->capture_default_str();
  fuse_cmd->add_option("--failed-rounds", f_failed, "exclude or error")->capture_default_str();

  // metrics ---------------------------------------------------------------
  auto* met = app.add_subcommand("metrics", "Error rates, score densities and summary for one or more runs");
  std::vector<std::string> m_run_ids;
  std::string m_out;
  bool m_per_round = false;
  int m_grid = 256;
  std::optional<double> m_bandwidth;
  met->add_option("--run-id", m_run_ids, "Run(s); several runs compare providers")->required();
  met->add_option("--out", m_out, "Output directory (default: <runs-dir>/<first run>/metrics)");
  met->add_flag("--per-round", m_per_round, "Plot every round's score instead of each pair's mean");
  met->add_option("--grid-points", m_grid, "KDE export grid size")->capture_default_str();
  met->add_option("--bandwidth", m_bandwidth, "Fixed KDE bandwidth (Silverman if unset)");

  // report ----------------------------------------------------------------
  auto* repo = app.add_subcommand("report", "Markdown report with consistency classes and excerpts");
  std::string rr_run_id;
  std::string rr_out;
  int rr_excerpts = 2;
  repo->add_option("--run-id", rr_run_id, "Run to report")->required();
  repo->add_option("--out", rr_out, "Output path (default: <runs-dir>/<run>/report.md)");
  repo->add_option("--excerpts", rr_excerpts, "Example pairs per consistency class")->capture_default_str();

  // mock-calibrate --------------------------------------------------------
  auto* cal = app.add_subcommand("mock-calibrate", "Find mock yes-rates that give target MACER/BPCER");
  double c_macer = 43.0;
  double c_bpcer = 0.0;
  int c_rounds = 3;
  double c_agreement = 1.0;
  double c_failure = 0.0;
  std::string c_fusion = "or";
  std::string c_failed = "exclude";
  std::string c_convention = "FailuresAsErrors";
  std::uint64_t c_seed = 1;
  std::string c_out;
  cal->add_option("--target-macer", c_macer, "Target MACER, percent")->capture_default_str();
  cal->add_option("--target-bpcer", c_bpcer, "Target BPCER, percent")->capture_default_str();
  cal->add_option("--rounds", c_rounds, "Rounds per pair")->capture_default_str();
  cal->add_option("--round-agreement", c_agreement, "Mock round agreement")->capture_default_str();
  cal->add_option("--failure-rate", c_failure, "Mock per-round failure rate")->capture_default_str();
  cal->add_option("--fusion", c_fusion, "or, majority, all")->capture_default_str();
  cal->add_option("--failed-rounds", c_failed, "exclude or error")->capture_default_str();
  cal->add_option("--convention", c_convention, "FailuresAsErrors or FailuresExcluded")->capture_default_str();
  cal->add_option("--seed", c_seed, "Seed written into the behavior file")->capture_default_str();
  cal->add_option("--out", c_out, "Write a mock behavior JSON here");

  CLI11_PARSE(app, argc, argv);

  json argv_json = json::array();
  for (int i = 0; i < argc; ++i) argv_json.push_back(argv[i]);
  auto command_spec = [&](const CLI::App* sub) {
    return json{{"tool_version", kToolVersion},
                {"subcommand", sub->get_name()},
                {"argv", argv_json},
                {"config", app.config_to_str(true, false)}};
  };

  try {
    // ---------------------------------------------------------------------
    if (validate->parsed()) {
      int problems = 0;
      try {
        const ProtocolManifest m = manifest_from_json(json::parse(std::ifstream(v_manifest)));
        const auto violations = validate_protocol(m);
        for (const auto& v : violations) std::cout << v.subject << ": " << v.rule << ": " << v.detail << '\n';
        problems += static_cast<int>(violations.size());
        std::cout << v_manifest << ": " << m.pairs.size() << " pairs (" << m.bona_fide_pair_count
                  << " bona fide";
        for (const auto& [t, n] : m.counts) std::cout << ", " << n << ' ' << to_string(t);
        std::cout << "), " << violations.size() << " violation(s)\n";
      } catch (const json::exception& e) {
        std::cout << v_manifest << ": not valid JSON: " << e.what() << '\n';
        ++problems;
      }
      if (!v_markers.empty()) {
        load_scenario_rules(v_markers);
        std::cout << v_markers << ": ok\n";
      }
      if (!v_mock.empty()) {
        load_mock_behavior(v_mock);
        std::cout << v_mock << ": ok\n";
      }
      return problems == 0 ? 0 : 1;
    }

    // ---------------------------------------------------------------------
    if (build->parsed()) {
      std::vector<ImageRef> images;
      if (b_synthetic) {
        images = make_synthetic_images(b_subjects, b_bf_per_subject, b_morphs);
      } else if (!b_images.empty()) {
        std::ifstream in(b_images);
        if (!in) throw ParseError("cannot open '" + b_images + "'");
        json j = json::parse(in);
        j["pairs"] = json::array();
        if (!j.contains("subjects")) {
          std::set<std::string> subjects;
          for (const auto& im : j.at("images")) subjects.insert(im.at("subject_id").get<std::string>());
          j["subjects"] = subjects;
        }
        images = manifest_from_json(j).images;
      } else {
        throw ParseError("give --images FILE or --synthetic");
      }
      const ProtocolManifest m = build_protocol(images, parse_pairing_policy(b_policy, b_seed), b_target);
      save_manifest(m, b_out);
      write_file(b_out + ".command.json", command_spec(build).dump(2) + "\n");
      std::cout << "wrote " << b_out << ": " << m.bona_fide_pair_count << " bona fide pairs";
      for (const auto& [t, n] : m.counts) std::cout << ", " << n << ' ' << to_string(t);
      std::cout << " (digest " << manifest_digest(m).substr(0, 16) << ")\n";
      return 0;
    }

    // ---------------------------------------------------------------------
    if (run->parsed()) {
      RunOptions o;
      o.runs_dir = runs_dir;
      o.run_id = r_run_id.empty() ? default_run_id() : r_run_id;
      o.manifest = load_manifest(r_manifest);
      o.provider = ProviderConfig::defaults_for(parse_provider_kind(r_provider));
      if (!r_model.empty()) o.provider.model_name = r_model;
      if (!r_endpoint.empty()) o.provider.endpoint_url = r_endpoint;
      if (!r_key_env.empty()) o.provider.api_key_env = r_key_env;
      o.provider.temperature = r_temperature;
      o.provider.max_output_tokens = r_max_tokens;
      o.provider.requests_per_minute = r_rpm;
      o.provider.max_retries = r_retries;
      o.provider.backoff_base = std::chrono::milliseconds(r_backoff_ms);
      o.provider.request_timeout = std::chrono::seconds(r_timeout_s);
      o.rounds = r_rounds;
      o.concurrency = r_concurrency;
      o.fusion = fusion_from(r_fusion, r_failed);
      if (!r_prompt.empty()) o.prompt = load_prompt_file(r_prompt);
      if (!r_markers.empty()) o.rules = load_scenario_rules(r_markers);
      if (!r_mock.empty()) {
        if (o.provider.kind != ProviderKind::Mock) throw ParseError("--mock-behavior only applies to --provider mock");
        o.mock = load_mock_behavior(r_mock);
      }
      const bool placeholder = r_placeholder || (o.provider.kind == ProviderKind::Mock && r_image_root.empty());
      const fs::path root = r_image_root.empty() ? fs::path(r_manifest).parent_path() : fs::path(r_image_root);
      o.loader = placeholder ? placeholder_loader() : disk_loader(root);
      o.command = command_spec(run);
      o.progress = [](const std::string& msg) { std::cerr << msg << '\n'; };

      const RunSummary s = execute_run(o);
      {
        const fs::path cmd_log = run_paths(o.runs_dir, o.run_id).dir / "commands.jsonl";
        std::ofstream out(cmd_log, std::ios::app);
        out << o.command.dump() << '\n';
      }
      for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "run " << s.run_id << ": " << s.new_transcripts << " new transcripts, " << s.new_errors
                << " errors, " << s.rounds_already_done << " rounds resumed from the log\n";
      if (s.systemic_error) throw Systemic(*s.systemic_error);
      int all_failed = 0;
      for (const auto& oc : s.outcomes) all_failed += oc.fused_q2 == FusedDecision::AllFailed;
      std::cout << "scenarios:";
      for (Scenario sc : kAllScenarios) {
        auto it = s.scenario_counts.find(sc);
        std::cout << ' ' << to_string(sc) << '=' << (it == s.scenario_counts.end() ? 0 : it->second);
      }
      std::cout << "\nfailure to answer: " << s.rounds_without_q2_answer << " rounds without a Q2 answer, "
                << all_failed << " of " << s.outcomes.size() << " pairs with no answer in any round\n";
      for (const auto& m : s.missing_pairs) std::cout << "missing: " << m << '\n';
      std::cout << "log: " << run_paths(o.runs_dir, o.run_id).log.string() << '\n';
      return 0;
    }

    // ---------------------------------------------------------------------
    if (rep->parsed()) {
      std::optional<ScenarioRules> rules;
      if (!rp_markers.empty()) rules = load_scenario_rules(rp_markers);
      std::optional<FusionPolicy> policy;
      if (!rp_fusion.empty()) policy = fusion_from(rp_fusion, rp_failed);
      const ReplayResult r = replay(runs_dir, rp_run_id, rules, policy);
      const auto stored = load_outcomes(runs_dir, rp_run_id);
      std::map<std::string, const PairOutcome*> before;
      for (const auto& o : stored) before[o.pair_id] = &o;
      int changed = 0;
      json lines = json::array();
      std::string body;
      for (const auto& o : r.outcomes) {
        body += outcome_to_json(o).dump() + "\n";
        auto it = before.find(o.pair_id);
        if (it != before.end() && (it->second->fused_q1 != o.fused_q1 || it->second->fused_q2 != o.fused_q2)) {
          ++changed;
        }
      }
      const fs::path dir = run_paths(runs_dir, rp_run_id).dir / "replay";
      write_file(dir / "outcomes.jsonl", body);
      std::string parsed;
      for (const auto& rr : r.rounds) parsed += round_result_to_json(rr).dump() + "\n";
      write_file(dir / "rounds.jsonl", parsed);
      write_file(dir / "command.json", command_spec(rep).dump(2) + "\n");
      std::map<Scenario, int> sc;
      for (const auto& rr : r.rounds) ++sc[rr.scenario];
      std::cout << "replayed " << r.outcomes.size() << " pairs; " << changed
                << " fused decisions differ from the stored outcomes\nscenarios:";
      for (Scenario s : kAllScenarios) std::cout << ' ' << to_string(s) << '=' << sc[s];
      std::cout << '\n';
      for (const auto& m : r.missing_pairs) std::cout << "missing: " << m << '\n';
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "wrote " << (dir / "outcomes.jsonl").string() << '\n';
      return 0;
    }

    // ---------------------------------------------------------------------
    if (fuse_cmd->parsed()) {
      const FusionPolicy p = fusion_from(f_fusion, f_failed);
      const ReplayResult r = refuse(runs_dir, f_run_id, p);
      std::string body;
      for (const auto& o : r.outcomes) body += outcome_to_json(o).dump() + "\n";
      const fs::path dir = run_paths(runs_dir, f_run_id).dir /
                           ("fused-" + slug(std::string(to_string(p.decision_rule))) + "-" +
                            slug(std::string(to_string(p.failure_handling))));
      write_file(dir / "outcomes.jsonl", body);
      write_file(dir / "command.json", command_spec(fuse_cmd).dump(2) + "\n");
      const Breakdown b = breakdown(r.outcomes, BreakdownOptions{Question::Q2, false, {}});
      std::cout << summary_text(b);
      std::cout << "wrote " << (dir / "outcomes.jsonl").string() << '\n';
      return 0;
    }

    // ---------------------------------------------------------------------
    if (met->parsed()) {
      std::vector<PairOutcome> outcomes;
      std::vector<std::string> warnings;
      for (const auto& id : m_run_ids) {
        auto stored = load_outcomes(runs_dir, id, &warnings);
        if (stored.empty()) {
          ReplayResult r = replay(runs_dir, id);
          warnings.push_back(id + ": no stored outcomes; metrics computed from a replay of the transcripts");
          stored = std::move(r.outcomes);
        }
        if (stored.empty()) throw ParseError("run '" + id + "' has no transcripts to score");
        outcomes.insert(outcomes.end(), stored.begin(), stored.end());
      }
      const fs::path out_dir = m_out.empty() ? run_paths(runs_dir, m_run_ids.front()).dir / "metrics" : fs::path(m_out);
      KdeOptions kde;
      kde.grid_points = m_grid;
      kde.bandwidth = m_bandwidth;

      const Breakdown q1 = breakdown(outcomes, BreakdownOptions{Question::Q1, m_per_round, kde});
      const Breakdown q2 = breakdown(outcomes, BreakdownOptions{Question::Q2, m_per_round, kde});
      Breakdown summary = q2;
      summary.warnings.insert(summary.warnings.begin(), warnings.begin(), warnings.end());
      write_file(out_dir / "error_rates.csv", error_rates_csv(q2));
      write_file(out_dir / "summary.txt", summary_text(summary));
      for (const auto* b : {&q1, &q2}) {
        const Question q = b == &q1 ? Question::Q1 : Question::Q2;
        for (const auto& row : b->rows) {
          const std::string stem = "kde_" + slug(row.provider) + "_" + std::string(to_string(row.morph_type)) + "_" +
                                   to_lower_ascii(to_string(q));
          write_file(out_dir / (stem + ".csv"), kde_csv(row));
          write_file(out_dir / (stem + ".svg"), kde_svg(row, q));
        }
      }
      // Extension: threshold sweep over the morph evidence score.
      for (const auto& p : q2.providers) {
        std::vector<PairOutcome> morph;
        std::vector<PairOutcome> bf;
        for (const auto& o : outcomes) {
          if (o.provider != p.provider) continue;
          (o.ground_truth == GroundTruth::MorphPair ? morph : bf).push_back(o);
        }
        const auto sweep = threshold_sweep(morph, bf);
        if (!sweep.empty()) write_file(out_dir / ("extension_threshold_sweep_" + slug(p.provider) + ".csv"), sweep_csv(sweep));
      }
      write_file(out_dir / "command.json", command_spec(met).dump(2) + "\n");
      std::cout << summary_text(summary);
      std::cout << "wrote " << out_dir.string() << '\n';
      return 0;
    }

    // ---------------------------------------------------------------------
    if (repo->parsed()) {
      ReportInput in = load_report_input(runs_dir, rr_run_id);
      if (in.outcomes.empty()) throw ParseError("run '" + rr_run_id + "' has no transcripts to report on");
      in.excerpts_per_class = rr_excerpts;
      const fs::path out = rr_out.empty() ? run_paths(runs_dir, rr_run_id).dir / "report.md" : fs::path(rr_out);
      write_file(out, render_report(in));
      write_file(out.string() + ".command.json", command_spec(repo).dump(2) + "\n");
      std::cout << "wrote " << out.string() << '\n';
      return 0;
    }

    // ---------------------------------------------------------------------
    if (cal->parsed()) {
      const FusionPolicy p = fusion_from(c_fusion, c_failed);
      const Convention conv = parse_convention(c_convention);
      const double morph_rate =
          calibrate_yes_rate(c_macer, GroundTruth::MorphPair, c_agreement, c_failure, c_rounds, p, conv);
      const double bf_rate =
          calibrate_yes_rate(c_bpcer, GroundTruth::BonaFidePair, c_agreement, c_failure, c_rounds, p, conv);
      std::cout << "per-round q2 yes rate, morph pairs:     " << morph_rate << " (expected MACER "
                << fixed2(expected_error_rate(morph_rate, GroundTruth::MorphPair, c_agreement, c_failure, c_rounds,
                                              p, conv))
                << ")\n";
      std::cout << "per-round q2 yes rate, bona fide pairs: " << bf_rate << " (expected BPCER "
                << fixed2(expected_error_rate(bf_rate, GroundTruth::BonaFidePair, c_agreement, c_failure, c_rounds,
                                              p, conv))
                << ")\n";
      if (!c_out.empty()) {
        MockBehavior b;
        b.seed = c_seed;
        b.q2_yes_rate[GroundTruth::MorphPair] = morph_rate;
        b.q2_yes_rate[GroundTruth::BonaFidePair] = bf_rate;
        b.round_agreement = c_agreement;
        b.failure_rate = c_failure;
        write_file(c_out, b.to_json().dump(2) + "\n");
        write_file(c_out + ".command.json", command_spec(cal).dump(2) + "\n");
        std::cout << "wrote " << c_out << '\n';
      }
      return 0;
    }
  } catch (const Systemic& e) {
    std::cerr << "dmad: systemic failure, run stopped: " << e.what() << '\n';
    return 2;
  } catch (const GatewayError& e) {
    std::cerr << "dmad: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return e.kind() == ErrorKind::AuthFailure ? 2 : 1;
  } catch (const RunStoreError& e) {
    std::cerr << "dmad: storage failure: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "dmad: storage failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "dmad: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
