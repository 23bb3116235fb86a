#include "dmad/parser.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

namespace dmad {

std::string_view to_string(Answer a) {
  switch (a) {
    case Answer::Yes: return "Yes";
    case Answer::No: return "No";
    case Answer::Absent: return "Absent";
  }
  return "?";
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::Structured: return "Structured";
    case Scenario::CompleteFailure: return "CompleteFailure";
    case Scenario::GuidanceProxy: return "GuidanceProxy";
    case Scenario::Base64Echo: return "Base64Echo";
    case Scenario::Disclaimered: return "Disclaimered";
  }
  return "?";
}

Answer parse_answer(std::string_view s) {
  if (iequals(s, "Yes")) return Answer::Yes;
  if (iequals(s, "No")) return Answer::No;
  if (iequals(s, "Absent")) return Answer::Absent;
  throw ParseError("unknown answer '" + std::string(s) + "'");
}

Scenario parse_scenario(std::string_view s) {
  for (Scenario sc : kAllScenarios) {
    if (iequals(s, to_string(sc))) return sc;
  }
  throw ParseError("unknown scenario '" + std::string(s) + "'");
}

ScenarioRules ScenarioRules::defaults() {
  ScenarioRules r;
  r.refusal_markers = {"unable to determine",
                       "cannot determine",
                       "can't determine",
                       "not able to determine",
                       "unable to perform",
                       "unable to assist",
                       "cannot assist",
                       "can't assist",
                       "can't help with",
                       "cannot help with",
                       "unable to help with",
                       "unable to provide an analysis"};
  r.guidance_markers = {"unable to directly analyze",
                        "cannot directly analyze",
                        "can't directly analyze",
                        "cannot directly visualize",
                        "can't directly visualize",
                        "i can guide you",
                        "here's how you can",
                        "here is how you can",
                        "i will have to make some assumptions",
                        "provide a general response",
                        "here is an example of how i'd respond"};
  r.base64_markers = {"base64:", "base64,"};
  r.disclaimer_markers = {"disclaimer:",
                          "would require a more in-depth analysis",
                          "definitive conclusion would require",
                          "using specialized tools",
                          "should not be considered definitive"};
  return r;
}

ScenarioRules ScenarioRules::from_json(const nlohmann::json& j) {
  ScenarioRules r = defaults();
  auto load = [&](const char* key, std::vector<std::string>& into) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_array()) throw ParseError(std::string(key) + ": expected an array of strings");
    std::vector<std::string> v;
    for (const auto& e : *it) {
      if (!e.is_string()) throw ParseError(std::string(key) + ": expected an array of strings");
      v.push_back(e.get<std::string>());
    }
    if (v.empty()) throw ParseError(std::string(key) + ": marker list must not be empty");
    into = std::move(v);
  };
  load("refusal_markers", r.refusal_markers);
  load("guidance_markers", r.guidance_markers);
  load("base64_markers", r.base64_markers);
  load("disclaimer_markers", r.disclaimer_markers);
  return r;
}

nlohmann::json ScenarioRules::to_json() const {
  return {{"refusal_markers", refusal_markers},
          {"guidance_markers", guidance_markers},
          {"base64_markers", base64_markers},
          {"disclaimer_markers", disclaimer_markers}};
}

ScenarioRules load_scenario_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open marker file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("marker file '" + path + "' is not valid JSON: " + e.what());
  }
  return ScenarioRules::from_json(j);
}

namespace {

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alnum(char c) { return is_alpha(c) || is_digit(c); }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }
bool is_b64(char c) { return is_alnum(c) || c == '+' || c == '/' || c == '='; }

// Lowercase ASCII with U+2019 folded to '\''; used for marker matching only.
std::string marker_view(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i + 2 < text.size() && static_cast<unsigned char>(text[i]) == 0xE2 &&
        static_cast<unsigned char>(text[i + 1]) == 0x80 && static_cast<unsigned char>(text[i + 2]) == 0x99) {
      out.push_back('\'');
      i += 2;
      continue;
    }
    char c = text[i];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out.push_back(c);
  }
  return out;
}

bool contains_any(const std::string& haystack, const std::vector<std::string>& markers) {
  return std::any_of(markers.begin(), markers.end(), [&](const std::string& m) {
    return !m.empty() && haystack.find(marker_view(m)) != std::string::npos;
  });
}


// Markdown emphasis and code marks removed, lowercased. Offsets differ from
// the raw text, so everything downstream of label detection works on this.
std::string normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c == '*' || c == '`' || c == '#' || c == '_') continue;
    out.push_back(c);
  }
  return out;
}

struct Label {
  std::size_t begin;
  std::size_t end;  // one past the question digit
  Question q;
};

std::vector<Label> find_labels(const std::string& low) {
  std::vector<Label> out;
  for (std::size_t i = 0; i < low.size(); ++i) {
    if (low[i] != 'q' || (i > 0 && is_alnum(low[i - 1]))) continue;
    std::size_t j = i + 1;
    if (low.compare(j, 7, "uestion") == 0) j += 7;
    while (j < low.size() && is_space(low[j])) ++j;
    if (j >= low.size() || (low[j] != '1' && low[j] != '2')) continue;
    if (j + 1 < low.size() && is_alnum(low[j + 1])) continue;
    out.push_back({i, j + 1, low[j] == '1' ? Question::Q1 : Question::Q2});
  }
  return out;
}

// yes/no as a whole word starting at pos.
std::optional<Answer> word_at(const std::string& low, std::size_t pos, std::size_t& word_end) {
  auto whole = [&](std::string_view w) {
    if (low.compare(pos, w.size(), w) != 0) return false;
    const std::size_t e = pos + w.size();
    if (e < low.size() && is_alpha(low[e])) return false;
    word_end = e;
    return true;
  };
  if (pos > 0 && is_alpha(low[pos - 1])) return std::nullopt;
  if (whole("yes")) return Answer::Yes;
  if (whole("no")) return Answer::No;
  return std::nullopt;
}

std::size_t skip_answer_word(const std::string& low, std::size_t j) {
  for (std::string_view w : {"final answer", "answer", "decision", "ans"}) {
    if (low.compare(j, w.size(), w) == 0 && (j + w.size() >= low.size() || !is_alpha(low[j + w.size()]))) {
      return j + w.size();
    }
  }
  return j;
}

struct Hit {
  Answer answer;
  std::size_t label_begin;
  std::size_t answer_end;
};

// "Q1 Answer: Yes", "Q1) Yes", "Q2 Answer) Yes." on one line.
std::optional<Hit> exact_label(const std::string& low, const Label& l) {
  std::size_t j = l.end;
  auto skip_punct = [&] {
    while (j < low.size() && (is_space(low[j]) || low[j] == ':' || low[j] == ')' || low[j] == ']' ||
                              low[j] == '.' || low[j] == '-' || low[j] == '=')) {
      ++j;
    }
  };
  skip_punct();
  j = skip_answer_word(low, j);
  skip_punct();
  std::size_t end = 0;
  if (auto a = word_at(low, j, end)) return Hit{*a, l.begin, end};
  return std::nullopt;
}

std::size_t line_begin(const std::string& low, std::size_t pos) {
  const std::size_t nl = pos == 0 ? std::string::npos : low.rfind('\n', pos - 1);
  return nl == std::string::npos ? 0 : nl + 1;
}

std::size_t line_end(const std::string& low, std::size_t pos) {
  const std::size_t nl = low.find('\n', pos);
  return nl == std::string::npos ? low.size() : nl;
}

bool only_bullets(const std::string& low, std::size_t from, std::size_t to) {
  for (std::size_t k = from; k < to; ++k) {
    const char c = low[k];
    if (!(is_space(c) || c == '-' || c == '>' || c == '+' || c == '(' || c == '[')) return false;
  }
  return true;
}

// Label opens its line; first yes/no word anywhere on that line.
std::optional<Hit> labeled_line(const std::string& low, const Label& l) {
  if (!only_bullets(low, line_begin(low, l.begin), l.begin)) return std::nullopt;
  const std::size_t stop = line_end(low, l.end);
  for (std::size_t k = l.end; k < stop; ++k) {
    std::size_t end = 0;
    if (auto a = word_at(low, k, end)) return Hit{*a, l.begin, end};
  }
  return std::nullopt;
}

// A later line within 200 characters that opens with yes/no, optionally
// introduced by "answer:". Bounded by the next question label.
std::optional<Hit> proximity(const std::string& low, const Label& l, std::size_t bound) {
  const std::size_t limit = std::min({bound, low.size(), l.end + 200});
  std::size_t k = line_end(low, l.end);
  while (k < limit) {
    std::size_t j = k + 1;
    while (j < limit && (is_space(low[j]) || low[j] == '-' || low[j] == '>')) ++j;
    j = skip_answer_word(low, j);
    while (j < limit && (is_space(low[j]) || low[j] == ':' || low[j] == ')' || low[j] == '.')) ++j;
    std::size_t end = 0;
    if (j < limit) {
      if (auto a = word_at(low, j, end); a && end <= limit) return Hit{*a, l.begin, end};
    }
    k = line_end(low, k + 1);
  }
  return std::nullopt;
}

std::optional<Hit> find_answer(const std::string& low, const std::vector<Label>& labels, Question q) {
  auto next_label_after = [&](std::size_t pos) {
    for (const auto& l : labels) {
      if (l.begin > pos) return l.begin;
    }
    return low.size();
  };
  for (const auto& l : labels) {
    if (l.q != q) continue;
    if (auto h = exact_label(low, l)) return h;
  }
  for (const auto& l : labels) {
    if (l.q != q) continue;
    if (auto h = labeled_line(low, l)) return h;
  }
  for (const auto& l : labels) {
    if (l.q != q) continue;
    if (auto h = proximity(low, l, next_label_after(l.begin))) return h;
  }
  return std::nullopt;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (is_space(c) || c == '\n') {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

ParsedAnswer answer_from_hit(const std::string& norm, const std::optional<Hit>& hit,
                             const std::optional<Hit>& other) {
  ParsedAnswer pa;
  if (!hit) return pa;
  pa.answer = hit->answer;
  std::size_t stop = norm.size();
  if (other && other->label_begin > hit->answer_end) stop = other->label_begin;
  const std::string_view segment(norm.data() + hit->answer_end, stop - hit->answer_end);
  pa.probability = extract_probability(segment);
  pa.explanation_excerpt = utf8_truncate(collapse_whitespace(segment), 280);
  return pa;
}

}  // namespace

std::optional<int> extract_probability(std::string_view segment) {
  const std::string low = to_lower_ascii(segment);
  std::vector<std::size_t> keyword_ends;
  for (std::string_view kw : {"probability", "confidence", "score"}) {
    for (std::size_t p = low.find(kw); p != std::string::npos; p = low.find(kw, p + 1)) {
      if (p > 0 && is_alpha(low[p - 1])) continue;
      std::size_t e = p + kw.size();
      while (e < low.size() && is_alpha(low[e])) ++e;
      keyword_ends.push_back(e);
    }
  }
  std::sort(keyword_ends.begin(), keyword_ends.end());

  for (std::size_t start : keyword_ends) {
    const std::size_t stop = line_end(low, start);
    std::size_t k = start;
    while (k < stop) {
      if (low[k] == '(') {
        // skip a parenthesised range such as "(0-100)"
        const std::size_t close = low.find(')', k);
        if (close != std::string::npos && close < stop && close - k <= 16) {
          k = close + 1;
          continue;
        }
      }
      if (is_digit(low[k])) break;
      ++k;
    }
    if (k >= stop) continue;
    if (k > 0 && low[k - 1] == '-' && (k < 2 || !is_digit(low[k - 2]))) return std::nullopt;
    std::size_t e = k;
    while (e < stop && is_digit(low[e]) && e - k < 12) ++e;
    double value = std::strtod(std::string(low.substr(k, e - k)).c_str(), nullptr);
    if (e + 1 < stop && low[e] == '.' && is_digit(low[e + 1])) {
      std::size_t f = e + 1;
      while (f < stop && is_digit(low[f]) && f - e < 12) ++f;
      value = std::strtod(std::string(low.substr(k, f - k)).c_str(), nullptr);
    }
    if (value > 100.0) return std::nullopt;
    return static_cast<int>(std::lround(value));
  }
  return std::nullopt;
}

bool has_base64_echo(std::string_view text, const ScenarioRules& rules) {
  for (std::size_t i = 0; i < text.size();) {
    if (!is_b64(text[i])) {
      ++i;
      continue;
    }
    std::size_t e = i;
    while (e < text.size() && is_b64(text[e])) ++e;
    const std::string_view run = text.substr(i, e - i);
    for (std::string_view magic : {"/9j/", "iVBOR"}) {
      const std::size_t m = run.find(magic);
      if (m != std::string_view::npos && run.size() - m >= 64) return true;
    }
    i = e;
  }
  const std::string low = marker_view(text);
  for (const auto& marker : rules.base64_markers) {
    const std::string m = marker_view(marker);
    if (m.empty()) continue;
    for (std::size_t p = low.find(m); p != std::string::npos; p = low.find(m, p + 1)) {
      std::size_t k = p + m.size();
      // low is the folded view; positions in it do not map back to text
      while (k < low.size() && (is_space(low[k]) || low[k] == '\n' || low[k] == '(' || low[k] == '"' ||
                                low[k] == '\'')) {
        ++k;
      }
      if (k >= low.size()) continue;
      // folded view, so the PNG magic appears as "ivbor"
      const std::string_view tail = std::string_view(low).substr(k);
      if (tail.size() >= 4 && (tail.substr(0, 4) == "/9j/" || tail.substr(0, 5) == "ivbor")) return true;
    }
  }
  return false;
}

namespace {

Scenario classify(std::string_view text, const ScenarioRules& rules, bool has_q1, bool has_q2) {
  if (has_base64_echo(text, rules)) return Scenario::Base64Echo;
  const std::string low = marker_view(text);
  const bool refusal = contains_any(low, rules.refusal_markers);
  const bool guidance = contains_any(low, rules.guidance_markers);
  if (!has_q1 && !has_q2) {
    if (refusal || !guidance) return Scenario::CompleteFailure;
    return Scenario::GuidanceProxy;
  }
  // Answers given alongside a deflection, or only one of the two questions
  // answered: a partial failure.
  if (refusal || guidance || !has_q1 || !has_q2) return Scenario::GuidanceProxy;
  if (contains_any(low, rules.disclaimer_markers)) return Scenario::Disclaimered;
  return Scenario::Structured;
}

}  // namespace

Scenario classify_scenario(std::string_view text, const ScenarioRules& rules) {
  const RoundResult r = parse_transcript(text, rules);
  return r.scenario;
}

RoundResult parse_transcript(std::string_view text, const ScenarioRules& rules) {
  const std::string norm = normalize(text);
  const std::string low = to_lower_ascii(norm);
  const auto labels = find_labels(low);
  const auto h1 = find_answer(low, labels, Question::Q1);
  const auto h2 = find_answer(low, labels, Question::Q2);

  RoundResult r;
  r.q1 = answer_from_hit(norm, h1, h2);
  r.q2 = answer_from_hit(norm, h2, h1);
  r.scenario = classify(text, rules, r.q1.answered(), r.q2.answered());
  return r;
}

RoundResult parse_transcript(std::string_view text, std::string pair_id, int round_index, std::string raw_ref,
                             const ScenarioRules& rules) {
  RoundResult r = parse_transcript(text, rules);
  r.pair_id = std::move(pair_id);
  r.round_index = round_index;
  r.raw_ref = std::move(raw_ref);
  return r;
}

}  // namespace dmad
