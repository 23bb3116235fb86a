#include <doctest.h>

#include "dmad/pipeline.hpp"
#include "dmad/report.hpp"
#include "support.hpp"

using namespace dmad;
using dmad::testing::TempDir;

namespace {

RunOptions options(const std::filesystem::path& dir, const std::string& id) {
  RunOptions o;
  o.runs_dir = dir;
  o.run_id = id;
  o.manifest = testing::paper_scale_manifest(8);
  return o;
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("a clean, consistent run is all Stable with zero error rates") {
    TempDir tmp;
    RunOptions o = options(tmp.path(), "clean");
    o.mock.q1_yes_rate = {{GroundTruth::BonaFidePair, 1.0}, {GroundTruth::MorphPair, 0.0}};
    o.mock.q2_yes_rate = {{GroundTruth::BonaFidePair, 0.0}, {GroundTruth::MorphPair, 1.0}};
    execute_run(o);
    const ReportInput in = load_report_input(tmp.path(), "clean");
    for (const auto& out : in.outcomes) CHECK(out.consistency == Consistency::Stable);
    const std::string md = render_report(in);
    CHECK(contains(md, "| Stable | 200 |"));
    CHECK(contains(md, "| Conflicting | 0 |"));
    CHECK(contains(md, "| mock | LMA | 0.00 | 0.00 | 0.00 | 50 | 50 |"));
    CHECK(contains(md, "## Assumptions"));
  }

  TEST_CASE("contradictory answers are classed Conflicting and quoted verbatim") {
    TempDir tmp;
    RunOptions o = options(tmp.path(), "conflict");
    o.mock.q1_yes_rate = {{GroundTruth::BonaFidePair, 1.0}, {GroundTruth::MorphPair, 1.0}};
    o.mock.q2_yes_rate = {{GroundTruth::BonaFidePair, 1.0}, {GroundTruth::MorphPair, 1.0}};
    execute_run(o);
    const ReportInput in = load_report_input(tmp.path(), "conflict");
    for (const auto& out : in.outcomes) CHECK(out.consistency == Consistency::Conflicting);
    const std::string md = render_report(in);
    CHECK(contains(md, "| Conflicting | 200 |"));
    CHECK(contains(md, "### Conflicting"));
    CHECK(contains(md, "> "));
    CHECK(contains(md, "(198 more pairs in this class)"));
    // every bona fide pair flagged as morphed
    CHECK(contains(md, "| mock | PIPE | 0.00 | 100.00 | 50.00 | 50 | 50 |"));
  }

  TEST_CASE("failure rounds are quoted in the report") {
    TempDir tmp;
    RunOptions o = options(tmp.path(), "fail");
    o.mock.failure_rate = 1.0;
    o.mock.failure_style = FailureStyle::Base64Echo;
    execute_run(o);
    const std::string md = render_report(load_report_input(tmp.path(), "fail"));
    CHECK(contains(md, "| Base64Echo | 600 |"));
    CHECK(contains(md, "metrics suppressed"));
    CHECK(contains(md, "(Base64: /9j/"));
  }

  TEST_CASE("CSV and summary formats") {
    ErrorRates r;
    r.provider = "openai";
    r.morph_type = MorphType::LMA;
    r.macer = 43;
    r.bpcer = 0;
    r.hter = 21.5;
    r.n_morph_pairs = 100;
    r.n_bf_pairs = 50;
    CHECK(error_rates_csv_row(r) == "openai,LMA,FailuresAsErrors,43.00,43.00,0.00,21.50,100,50,0.00");
    CHECK(fixed2(-0.0) == "0.00");
    CHECK(fixed2(2.0 / 3.0) == "0.67");
  }

  TEST_CASE("KDE exports") {
    BreakdownRow row;
    row.provider = "mock";
    row.bona_fide.samples = {10, 20, 30};
    row.bona_fide.curve = kde_estimate(row.bona_fide.samples, KdeOptions{11});
    row.morph.samples = {70, 70};
    row.morph.point_mass = 70;
    const std::string csv = kde_csv(row);
    CHECK(csv.rfind("score,bona_fide_density,morph_density\n", 0) == 0);
    CHECK(contains(csv, "# morph scores all equal 70"));
    const std::string svg = kde_svg(row, Question::Q2);
    CHECK(contains(svg, "<svg"));
    CHECK(contains(svg, "polyline"));
    CHECK(contains(svg, "stroke-dasharray"));
  }
}
