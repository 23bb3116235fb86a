#include "dmad/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dmad/pipeline.hpp"

namespace dmad {

namespace fs = std::filesystem;

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string error_rates_csv_row(const ErrorRates& r) {
  std::ostringstream out;
  out << r.provider << ',' << to_string(r.morph_type) << ',' << to_string(r.convention) << ',' << fixed2(r.macer)
      << ',' << fixed2(r.apcer()) << ',' << fixed2(r.bpcer) << ',' << fixed2(r.hter) << ',' << r.n_morph_pairs << ','
      << r.n_bf_pairs << ',' << fixed2(r.failure_to_answer_rate);
  return out.str();
}

std::string error_rates_csv(const Breakdown& b) {
  std::string out(kErrorRatesCsvHeader);
  out += '\n';
  for (const auto& row : b.rows) {
    for (Convention c : kAllConventions) {
      auto it = row.rates.find(c);
      if (it != row.rates.end()) out += error_rates_csv_row(it->second) + "\n";
    }
  }
  return out;
}

std::string summary_text(const Breakdown& b) {
  std::ostringstream out;
  for (const auto& p : b.providers) {
    out << "provider " << p.provider << ": " << p.pairs << " pairs, " << p.all_failed
        << " failed every round (failure-to-answer " << fixed2(p.failure_to_answer_rate) << "%)\n";
    if (p.metrics_suppressed) {
      out << "  metrics suppressed: no pair was answered\n\n";
      continue;
    }
    for (Convention c : kAllConventions) {
      out << "  [" << to_string(c) << "] morph_type MACER BPCER HTER\n";
      for (const auto& row : b.rows) {
        if (row.provider != p.provider) continue;
        auto it = row.rates.find(c);
        if (it == row.rates.end()) continue;
        const ErrorRates& r = it->second;
        out << "  " << to_string(r.morph_type) << ' ' << fixed2(r.macer) << ' ' << fixed2(r.bpcer) << ' '
            << fixed2(r.hter) << '\n';
      }
    }
    out << '\n';
  }
  if (!b.warnings.empty()) {
    out << "warnings:\n";
    for (const auto& w : b.warnings) out << "  " << w << '\n';
  }
  return out.str();
}

namespace {

std::string num(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

}  // namespace

std::string kde_csv(const BreakdownRow& row) {
  std::ostringstream out;
  out << "score,bona_fide_density,morph_density\n";
  const KDECurve* bf = row.bona_fide.curve ? &*row.bona_fide.curve : nullptr;
  const KDECurve* mo = row.morph.curve ? &*row.morph.curve : nullptr;
  const KDECurve* any = bf != nullptr ? bf : mo;
  if (any != nullptr) {
    for (std::size_t i = 0; i < any->grid.size(); ++i) {
      out << num(any->grid[i], 10) << ',';
      if (bf != nullptr) out << num(bf->density[i], 10);
      out << ',';
      if (mo != nullptr) out << num(mo->density[i], 10);
      out << '\n';
    }
  }
  if (row.bona_fide.point_mass) out << "# bona fide scores all equal " << num(*row.bona_fide.point_mass, 10) << '\n';
  if (row.morph.point_mass) out << "# morph scores all equal " << num(*row.morph.point_mass, 10) << '\n';
  return out.str();
}

std::string kde_svg(const BreakdownRow& row, Question q) {
  constexpr double W = 640, H = 360, L = 60, R = 20, T = 40, B = 50;
  const double pw = W - L - R;
  const double ph = H - T - B;
  double ymax = 0;
  for (const auto* d : {&row.bona_fide, &row.morph}) {
    if (d->curve) ymax = std::max(ymax, *std::max_element(d->curve->density.begin(), d->curve->density.end()));
  }
  if (ymax <= 0) ymax = 1;
  ymax *= 1.1;
  auto sx = [&](double x) { return L + pw * std::clamp(x, 0.0, 100.0) / 100.0; };
  auto sy = [&](double y) { return T + ph * (1.0 - y / ymax); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << row.provider << ' ' << to_string(row.morph_type) << ": " << to_string(q)
      << " score density</text>\n";
  // axes and ticks
  out << "<path d=\"M" << L << ' ' << T << " V" << T + ph << " H" << L + pw
      << "\" stroke=\"black\" fill=\"none\"/>\n";
  for (int t = 0; t <= 100; t += 20) {
    out << "<text x=\"" << fixed2(sx(t)) << "\" y=\"" << T + ph + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << t << "</text>\n";
  }
  out << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">score (0-100)</text>\n";
  out << "<text x=\"16\" y=\"" << T + ph / 2 << "\" transform=\"rotate(-90 16 " << T + ph / 2
      << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">density</text>\n";

  struct Series {
    const ScoreDistribution* d;
    const char* name;
    const char* color;
  };
  int legend = 0;
  for (const Series& s : {Series{&row.bona_fide, "bona fide", "#1f77b4"}, Series{&row.morph, "morph", "#d62728"}}) {
    if (s.d->curve) {
      out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
      const auto& c = *s.d->curve;
      for (std::size_t i = 0; i < c.grid.size(); ++i) {
        out << (i ? " " : "") << fixed2(sx(c.grid[i])) << ',' << fixed2(sy(c.density[i]));
      }
      out << "\"/>\n";
    } else if (s.d->point_mass) {
      out << "<line x1=\"" << fixed2(sx(*s.d->point_mass)) << "\" y1=\"" << T << "\" x2=\""
          << fixed2(sx(*s.d->point_mass)) << "\" y2=\"" << T + ph << "\" stroke=\"" << s.color
          << "\" stroke-width=\"2\" stroke-dasharray=\"4 3\"/>\n";
    } else {
      continue;
    }
    const double ly = T + 10 + 18 * legend++;
    out << "<line x1=\"" << L + pw - 120 << "\" y1=\"" << ly << "\" x2=\"" << L + pw - 100 << "\" y2=\"" << ly
        << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << L + pw - 94 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << s.name << " (n=" << s.d->samples.size() << ")</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream out;
  out << "threshold,apcer,bpcer\n";
  for (const auto& p : points) out << p.threshold << ',' << fixed2(p.apcer) << ',' << fixed2(p.bpcer) << '\n';
  return out.str();
}

// --- markdown report ----------------------------------------------------------

ReportInput load_report_input(const fs::path& runs_dir, const std::string& run_id) {
  ReportInput in;
  in.snapshot = load_snapshot(runs_dir, run_id);
  const LogScan scan = read_log(run_paths(runs_dir, run_id).log);
  in.warnings = scan.warnings;
  for (const auto& r : scan.records) {
    if (!r.round_index) continue;
    if (r.kind == RecordKind::Transcript) {
      in.transcript_text[{r.pair_id, *r.round_index}] = transcript_from_record(r).text;
    } else if (r.kind == RecordKind::Error) {
      in.errors[{r.pair_id, *r.round_index}] = error_from_record(r);
    }
  }
  in.outcomes = load_outcomes(runs_dir, run_id, &in.warnings);
  if (in.outcomes.empty()) {
    ReplayResult rep = replay(runs_dir, run_id);
    in.outcomes = std::move(rep.outcomes);
    in.rounds = std::move(rep.rounds);
    in.warnings.push_back("run has no stored outcomes; report built from a replay of the transcripts");
    for (const auto& m : rep.missing_pairs) in.warnings.push_back("missing: " + m);
  } else {
    in.rounds = load_parsed(runs_dir, run_id);
  }
  in.metrics = breakdown(in.outcomes, BreakdownOptions{Question::Q2, false, {}});
  return in;
}

namespace {

std::string quote_block(std::string_view text, std::size_t max_bytes) {
  std::string body = utf8_truncate(text, max_bytes);
  const bool cut = body.size() < text.size();
  std::string out;
  std::size_t start = 0;
  while (start <= body.size()) {
    const std::size_t nl = body.find('\n', start);
    const std::string_view line =
        std::string_view(body).substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    out += line.empty() ? ">\n" : "> " + std::string(line) + "\n";
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  if (cut) out += "> [... " + std::to_string(text.size() - body.size()) + " more bytes]\n";
  return out;
}

std::string answer_cell(const ParsedAnswer& a) {
  std::string s(to_string(a.answer));
  if (a.probability) s += " (" + std::to_string(*a.probability) + ")";
  return s;
}

}  // namespace

std::string render_report(const ReportInput& in) {
  const auto& snap = in.snapshot;
  std::ostringstream out;
  out << "# D-MAD run report: " << snap.run_id << "\n\n";
  out << "| field | value |\n|---|---|\n";
  out << "| provider | " << snap.provider.value("provider", "") << " |\n";
  out << "| model | " << snap.provider.value("model", "") << " |\n";
  const auto temperature = snap.provider.value("temperature", nlohmann::json("provider-default"));
  out << "| temperature | " << (temperature.is_string() ? temperature.get<std::string>() : temperature.dump())
      << " |\n";
  out << "| prompt | " << snap.prompt_version << " (sha256 " << snap.prompt_sha256.substr(0, 12) << ") |\n";
  out << "| manifest digest | " << snap.manifest_digest.substr(0, 16) << " |\n";
  out << "| rounds per pair | " << snap.rounds << " |\n";
  out << "| fusion | " << to_string(snap.fusion.decision_rule) << ", failed rounds "
      << to_string(snap.fusion.failure_handling) << " |\n";
  out << "| started | " << snap.started_at << " |\n\n";

  std::map<std::string, std::vector<const RoundResult*>> rounds_by_pair;
  for (const auto& r : in.rounds) rounds_by_pair[r.pair_id].push_back(&r);
  for (auto& [id, v] : rounds_by_pair) {
    std::sort(v.begin(), v.end(), [](const RoundResult* a, const RoundResult* b) { return a->round_index < b->round_index; });
  }

  // scenario tally over answered transcripts, transport errors separately
  std::map<Scenario, int> scenarios;
  for (const auto& r : in.rounds) {
    if (in.transcript_text.count({r.pair_id, r.round_index}) != 0) ++scenarios[r.scenario];
  }
  out << "## Reply scenarios\n\n| scenario | rounds |\n|---|---|\n";
  for (Scenario s : kAllScenarios) out << "| " << to_string(s) << " | " << scenarios[s] << " |\n";
  out << "| transport/provider error | " << in.errors.size() << " |\n\n";

  std::map<Consistency, std::vector<const PairOutcome*>> by_class;
  for (const auto& o : in.outcomes) by_class[o.consistency].push_back(&o);
  out << "## Round consistency\n\n| class | pairs |\n|---|---|\n";
  for (Consistency c : kAllConsistency) out << "| " << to_string(c) << " | " << by_class[c].size() << " |\n";
  out << '\n';

  out << "## Error rates (fused Q2)\n\n";
  for (Convention c : kAllConventions) {
    out << "### " << to_string(c) << "\n\n";
    out << "| provider | morph type | MACER | BPCER | HTER | morph pairs | bona fide pairs |\n";
    out << "|---|---|---|---|---|---|---|\n";
    for (const auto& row : in.metrics.rows) {
      auto it = row.rates.find(c);
      if (it == row.rates.end()) continue;
      const ErrorRates& r = it->second;
      out << "| " << r.provider << " | " << to_string(r.morph_type) << " | " << fixed2(r.macer) << " | "
          << fixed2(r.bpcer) << " | " << fixed2(r.hter) << " | " << r.n_morph_pairs << " | " << r.n_bf_pairs
          << " |\n";
    }
    out << '\n';
  }
  for (const auto& p : in.metrics.providers) {
    out << "Failure to answer (" << p.provider << "): " << p.all_failed << " of " << p.pairs << " pairs ("
        << fixed2(p.failure_to_answer_rate) << "%)"
        << (p.metrics_suppressed ? "; metrics suppressed" : "") << "\n\n";
  }

  out << "## Examples by consistency class\n\n";
  for (Consistency c : kAllConsistency) {
    const auto& pairs = by_class[c];
    if (pairs.empty()) continue;
    out << "### " << to_string(c) << "\n\n";
    int shown = 0;
    for (const PairOutcome* o : pairs) {
      if (shown++ >= in.excerpts_per_class) break;
      out << "**" << o->pair_id << "** (" << to_string(o->ground_truth);
      if (o->morph_type) out << ", " << to_string(*o->morph_type);
      out << "): fused Q1 " << to_string(o->fused_q1) << ", fused Q2 " << to_string(o->fused_q2) << "\n\n";
      for (int k = 1; k <= o->rounds_total; ++k) {
        const RoundResult* rr = nullptr;
        if (auto it = rounds_by_pair.find(o->pair_id); it != rounds_by_pair.end()) {
          for (const auto* r : it->second) {
            if (r->round_index == k) rr = r;
          }
        }
        out << "Round " << k;
        if (auto e = in.errors.find({o->pair_id, k}); e != in.errors.end()) {
          out << ": " << to_string(e->second.kind) << " error: " << e->second.message << "\n\n";
          continue;
        }
        if (rr != nullptr) {
          out << ": " << to_string(rr->scenario) << "; Q1 " << answer_cell(rr->q1) << "; Q2 " << answer_cell(rr->q2);
        }
        out << "\n\n";
        if (auto t = in.transcript_text.find({o->pair_id, k}); t != in.transcript_text.end()) {
          const bool failure = rr != nullptr && rr->scenario != Scenario::Structured &&
                               rr->scenario != Scenario::Disclaimered;
          out << quote_block(t->second, failure ? 1200 : 600) << '\n';
        }
      }
    }
    if (pairs.size() > static_cast<std::size_t>(in.excerpts_per_class)) {
      out << "(" << pairs.size() - in.excerpts_per_class << " more pairs in this class)\n\n";
    }
  }

  out << "## Assumptions\n\n";
  for (const auto& a : snap.assumptions) out << "- " << a << '\n';
  if (!in.warnings.empty() || !in.metrics.warnings.empty()) {
    out << "\n## Warnings\n\n";
    for (const auto& w : in.warnings) out << "- " << w << '\n';
    for (const auto& w : in.metrics.warnings) out << "- " << w << '\n';
  }
  return out.str();
}

}  // namespace dmad
