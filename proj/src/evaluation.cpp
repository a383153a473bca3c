#include "hmt/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include <fmt/format.h>
#include <json.hpp>

#ifdef HMT_HAVE_OPENMP
#include <omp.h>
#endif

#include "hmt/error.hpp"

namespace hmt {

using nlohmann::json;

namespace {

const std::vector<std::string>& display_order() {
  static const std::vector<std::string> order{"bio",  "travel plan",   "dialogue",
                                              "poem", "event summary", "story"};
  return order;
}

using CellKey = std::pair<std::string, Aspect>;
using CellCounts = std::map<CellKey, LabelCounts>;

struct Triple {
  size_t first = 0;  // index range into the sorted record order
  size_t last = 0;
};

std::vector<size_t> sorted_order(const std::vector<AnnotationRecord>& records) {
  std::vector<size_t> order(records.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const auto& x = records[a];
    const auto& y = records[b];
    return std::tie(x.task_name, x.sample_id, x.aspect, x.annotator_id) <
           std::tie(y.task_name, y.sample_id, y.aspect, y.annotator_id);
  });
  return order;
}

std::vector<Triple> group_triples(const std::vector<AnnotationRecord>& records,
                                  const std::vector<size_t>& order) {
  std::vector<Triple> groups;
  size_t i = 0;
  while (i < order.size()) {
    const auto& head = records[order[i]];
    size_t j = i + 1;
    while (j < order.size()) {
      const auto& r = records[order[j]];
      if (r.task_name != head.task_name || r.sample_id != head.sample_id || r.aspect != head.aspect)
        break;
      ++j;
    }
    groups.push_back({i, j});
    i = j;
  }
  return groups;
}

void validate_all(const std::vector<AnnotationRecord>& records, const TaskCatalog& catalog) {
  for (const auto& r : records) validate_annotation(r, catalog);
}

// Scores one triple into `counts`. Throws on malformed triples.
void score_triple(const std::vector<AnnotationRecord>& records, const std::vector<size_t>& order,
                  const Triple& g, const TaskCatalog& catalog, Regime regime, CellCounts& counts) {
  const auto& head = records[order[g.first]];
  const size_t n = g.last - g.first;
  auto describe = [&] {
    return fmt::format("{}/{}/{}", head.task_name, head.sample_id, to_string(head.aspect));
  };
  if (n != 3)
    throw Error(Errc::IncompleteTriple, fmt::format("{} has {} annotations, expected 3", describe(), n));
  for (size_t k = g.first + 1; k < g.last; ++k)
    if (records[order[k]].annotator_id == records[order[k - 1]].annotator_id)
      throw Error(Errc::IncompleteTriple,
                  fmt::format("{} has a repeated annotator '{}'", describe(),
                              records[order[k]].annotator_id));

  std::vector<Label> votes;
  if (head.aspect == Aspect::knowledge_absorption) {
    const int tolerance =
        regime.ka == KaRegime::strict ? 0 : tolerance_for(get_task(catalog, head.task_name));
    for (size_t k = g.first; k < g.last; ++k)
      votes.push_back(score_sample_ka(*records[order[k]].missing_count, tolerance) ? Label::yes
                                                                                  : Label::no);
  } else {
    for (size_t k = g.first; k < g.last; ++k) votes.push_back(records[order[k]].vote);
  }
  counts[{head.task_name, head.aspect}].add(majority_label(votes, regime.na));
}

MetricReport finish_report(const CellCounts& counts, const TaskCatalog& catalog, Regime regime) {
  MetricReport report;
  report.regime = regime;
  std::set<Aspect> aspects;
  for (const auto& [key, c] : counts) {
    report.per_task[key.first][key.second] = c.score(regime.na);
    aspects.insert(key.second);
  }

  const auto core = catalog.core_tasks();
  for (Aspect a : aspects) {
    Percent avg = Ratio{};
    if (core.empty()) avg.reset();
    for (const TaskSpec* t : core) {
      auto task_it = report.per_task.find(t->name);
      if (task_it == report.per_task.end()) {
        avg.reset();
        break;
      }
      auto cell = task_it->second.find(a);
      if (cell == task_it->second.end() || !cell->second) {
        avg.reset();
        break;
      }
      *avg = *avg + *cell->second;
    }
    if (avg) *avg = *avg / static_cast<std::int64_t>(core.size());
    report.averages[a] = avg;
  }

  for (const auto& name : display_order())
    if (report.per_task.count(name)) report.core_order.push_back(name);
  for (const auto& [name, _] : report.per_task)
    if (std::find(report.core_order.begin(), report.core_order.end(), name) ==
        report.core_order.end())
      report.core_order.push_back(name);
  return report;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> tokens_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::ispunct(c) && c != '\'' && c != '-') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    }
    // apostrophes and hyphens join: "you're" -> "youre", "7-star" -> "7star"
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool is_stopword(const std::string& t) {
  static const std::set<std::string> kStop{
      "a",   "an",  "the", "and", "or",  "of",  "to",   "in",  "on",   "at",  "for", "with",
      "by",  "is",  "are", "was", "be",  "it",  "its",  "my",  "your", "his", "her", "their",
      "i",   "you", "he",  "she", "we",  "they", "me",  "as",  "from", "that", "this", "do",
      "some", "so", "but", "not", "no",  "yes"};
  return kStop.count(t) > 0;
}

std::vector<std::string> split_fields(std::string_view line) {
  const char delim = line.find('\t') != std::string_view::npos ? '\t' : ',';
  std::vector<std::string> fields;
  size_t i = 0;
  while (true) {
    size_t j = line.find(delim, i);
    fields.push_back(trim(line.substr(i, j == std::string_view::npos ? line.size() - i : j - i)));
    if (j == std::string_view::npos) break;
    i = j + 1;
  }
  return fields;
}

AnnotationRecord record_from_fields(const std::vector<std::string>& f, size_t line_no) {
  auto fail = [&](const std::string& why) {
    throw Error(Errc::ParseError, fmt::format("annotations line {}: {}", line_no, why));
  };
  if (f.size() < 5 || f.size() > 6) fail(fmt::format("expected 5 or 6 fields, got {}", f.size()));
  AnnotationRecord r;
  r.task_name = f[0];
  r.sample_id = f[1];
  auto aspect = parse_aspect(f[2]);
  if (!aspect) fail("unknown aspect '" + f[2] + "'");
  r.aspect = *aspect;
  r.annotator_id = f[3];
  if (f.size() == 6 && !f[5].empty() && f[5] != "-") {
    try {
      size_t used = 0;
      int v = std::stoi(f[5], &used);
      if (used != f[5].size()) throw std::invalid_argument(f[5]);
      r.missing_count = v;
    } catch (const std::exception&) {
      fail("bad missing_count '" + f[5] + "'");
    }
  }
  if (f[4] == "-" || f[4].empty()) {
    if (r.aspect != Aspect::knowledge_absorption) fail("vote required");
    r.vote = r.missing_count.value_or(1) == 0 ? Label::yes : Label::no;
  } else {
    auto vote = parse_label(f[4]);
    if (!vote) fail("unknown vote '" + f[4] + "'");
    r.vote = *vote;
  }
  return r;
}

json percent_json(const Percent& p) {
  if (!p) return nullptr;
  return {{"percent", std::stod(format_percent(*p))},
          {"text", format_percent(*p)},
          {"exact", fmt::format("{}/{}", p->num, p->den)}};
}

}  // namespace

// --- enums --------------------------------------------------------------------

std::string_view to_string(Aspect a) noexcept {
  switch (a) {
    case Aspect::q_validity: return "q_validity";
    case Aspect::q_relevance: return "q_relevance";
    case Aspect::validity: return "validity";
    case Aspect::knowledge_absorption: return "knowledge_absorption";
    case Aspect::relevance: return "relevance";
    case Aspect::robustness: return "robustness";
    case Aspect::coherence: return "coherence";
  }
  return "validity";
}

std::optional<Aspect> parse_aspect(std::string_view s) noexcept {
  for (Aspect a : kAllAspects)
    if (to_string(a) == s) return a;
  return std::nullopt;
}

bool allows_not_applicable(Aspect a) noexcept {
  return a == Aspect::robustness || a == Aspect::coherence;
}

std::string_view to_string(Label l) noexcept {
  switch (l) {
    case Label::yes: return "yes";
    case Label::no: return "no";
    case Label::not_applicable: return "not_applicable";
  }
  return "no";
}

std::optional<Label> parse_label(std::string_view s) noexcept {
  std::string v = lower(s);
  if (v == "yes" || v == "y" || v == "1") return Label::yes;
  if (v == "no" || v == "n" || v == "0") return Label::no;
  if (v == "not_applicable" || v == "na" || v == "n/a") return Label::not_applicable;
  return std::nullopt;
}

std::string_view to_string(KaRegime r) noexcept { return r == KaRegime::strict ? "strict" : "tolerant"; }
std::string_view to_string(NaRegime r) noexcept {
  return r == NaRegime::na_as_no ? "na_as_no" : "na_excluded";
}

// --- Ratio --------------------------------------------------------------------

Ratio Ratio::make(std::int64_t num, std::int64_t den) {
  if (den <= 0) throw Error(Errc::InvalidRequest, "ratio with non-positive denominator");
  std::int64_t g = std::gcd(num, den);
  if (g == 0) g = 1;
  return {num / g, den / g};
}

Ratio operator+(Ratio a, Ratio b) {
  std::int64_t l = std::lcm(a.den, b.den);
  return Ratio::make(a.num * (l / a.den) + b.num * (l / b.den), l);
}

Ratio operator/(Ratio a, std::int64_t k) { return Ratio::make(a.num, a.den * k); }

std::string format_percent(const Ratio& r) {
  // round(r * 100) / 100, halves away from zero (values are non-negative)
  std::int64_t hundredths = (2 * r.num * 100 + r.den) / (2 * r.den);
  return fmt::format("{}.{:02}", hundredths / 100, hundredths % 100);
}

// --- scoring --------------------------------------------------------------------

Label majority_label(const std::vector<Label>& votes, NaRegime regime) {
  if (votes.size() != 3)
    throw Error(Errc::WrongArity, fmt::format("majority needs 3 votes, got {}", votes.size()));
  int yes = 0, no = 0, na = 0;
  for (Label v : votes) {
    if (v == Label::not_applicable && regime == NaRegime::na_as_no) v = Label::no;
    (v == Label::yes ? yes : v == Label::no ? no : na) += 1;
  }
  if (na >= 2) return Label::not_applicable;
  return yes > no ? Label::yes : Label::no;  // 1/1/1 split resolves to no
}

int tolerance_for(const TaskSpec& task) {
  if (task.question_bank.empty())
    throw Error(Errc::EmptyBank, "task '" + task.name + "' has no question bank");
  return task.question_bank.size() <= 4 ? 1 : 2;
}

Percent LabelCounts::score(NaRegime regime) const {
  const std::int64_t den = regime == NaRegime::na_as_no ? yes + no + na : yes + no;
  if (den == 0) return std::nullopt;
  return Ratio::make(100 * yes, den);
}

Percent task_score(const std::vector<Label>& sample_labels, NaRegime regime) {
  LabelCounts c;
  for (Label l : sample_labels) c.add(l);
  return c.score(regime);
}

void validate_annotation(const AnnotationRecord& r, const TaskCatalog& catalog) {
  const TaskSpec& task = get_task(catalog, r.task_name);
  auto where = [&] { return fmt::format("{}/{}/{}/{}", r.task_name, r.sample_id, to_string(r.aspect), r.annotator_id); };
  if (r.sample_id.empty() || r.annotator_id.empty())
    throw Error(Errc::ValidationError, "annotation without sample or annotator id");
  if (r.vote == Label::not_applicable && !allows_not_applicable(r.aspect))
    throw Error(Errc::ValidationError, where() + ": not_applicable is only legal for robustness and coherence");
  if (r.aspect == Aspect::knowledge_absorption) {
    if (!r.missing_count) throw Error(Errc::MissingCountAbsent, where() + ": missing_count required");
    if (*r.missing_count < 0 ||
        static_cast<size_t>(*r.missing_count) > task.question_bank.size())
      throw Error(Errc::ValidationError,
                  fmt::format("{}: missing_count {} outside [0, {}]", where(), *r.missing_count,
                              task.question_bank.size()));
  }
}

MetricReport aggregate_report_serial(const std::vector<AnnotationRecord>& records,
                                     const TaskCatalog& catalog, Regime regime) {
  validate_all(records, catalog);
  const auto order = sorted_order(records);
  const auto groups = group_triples(records, order);
  CellCounts counts;
  for (const auto& g : groups) score_triple(records, order, g, catalog, regime, counts);
  return finish_report(counts, catalog, regime);
}

MetricReport aggregate_report(const std::vector<AnnotationRecord>& records,
                              const TaskCatalog& catalog, Regime regime) {
#ifndef HMT_HAVE_OPENMP
  return aggregate_report_serial(records, catalog, regime);
#else
  validate_all(records, catalog);
  const auto order = sorted_order(records);
  const auto groups = group_triples(records, order);
  const auto n = static_cast<std::int64_t>(groups.size());

  CellCounts counts;
  std::optional<Error> failure;
  std::int64_t failed_at = n;
#pragma omp parallel
  {
    CellCounts local;
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        score_triple(records, order, groups[static_cast<size_t>(i)], catalog, regime, local);
      } catch (const Error& e) {
#pragma omp critical(hmt_aggregate_error)
        if (i < failed_at) {
          failed_at = i;
          failure.emplace(e);
        }
      }
    }
#pragma omp critical(hmt_aggregate_merge)
    for (const auto& [key, c] : local) counts[key] += c;
  }
  // Report the same triple the serial scan would have failed on.
  if (failure) throw *failure;
  return finish_report(counts, catalog, regime);
#endif
}

// --- heuristic absorption -----------------------------------------------------------

std::set<size_t> auto_absorption_check(const std::vector<QaPair>& qa_pairs, std::string_view output) {
  if (trim(output).empty()) throw Error(Errc::InvalidRequest, "output is empty");
  const auto out_tokens = tokens_of(output);
  const std::set<std::string> out_set(out_tokens.begin(), out_tokens.end());
  std::set<size_t> missing;
  for (size_t i = 0; i < qa_pairs.size(); ++i) {
    const auto answer = tokens_of(qa_pairs[i].second);
    if (answer.empty()) {
      missing.insert(i);
      continue;
    }
    const bool contiguous =
        std::search(out_tokens.begin(), out_tokens.end(), answer.begin(), answer.end()) !=
        out_tokens.end();
    if (contiguous) continue;
    std::set<std::string> content;
    for (const auto& t : answer)
      if (!is_stopword(t)) content.insert(t);
    if (content.empty()) content.insert(answer.begin(), answer.end());
    size_t hits = 0;
    for (const auto& t : content) hits += out_set.count(t);
    if (hits * 10 < content.size() * 6) missing.insert(i);
  }
  return missing;
}

// --- files & rendering ------------------------------------------------------------

std::vector<AnnotationRecord> parse_annotations(std::string_view text) {
  std::vector<AnnotationRecord> out;
  size_t line_no = 0;
  size_t i = 0;
  bool first_row = true;
  while (i <= text.size()) {
    size_t j = text.find('\n', i);
    if (j == std::string_view::npos) j = text.size();
    std::string_view line = text.substr(i, j - i);
    ++line_no;
    i = j + 1;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') {
      if (j == text.size()) break;
      continue;
    }
    if (t[0] == '{') {
      first_row = false;
      try {
        out.push_back(annotation_from_json(t));
      } catch (const Error& e) {
        throw Error(e.code(), fmt::format("annotations line {}: {}", line_no, e.what()));
      }
    } else {
      auto fields = split_fields(line);
      bool header = first_row && lower(fields[0]) == "task";
      first_row = false;
      if (header) {
        if (j == text.size()) break;
        continue;
      }
      out.push_back(record_from_fields(fields, line_no));
    }
    if (j == text.size()) break;
  }
  return out;
}

std::vector<AnnotationRecord> load_annotations_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::NotFound, "cannot read annotation file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_annotations(buf.str());
}

std::string format_annotation_tsv(const AnnotationRecord& r) {
  std::string vote = r.aspect == Aspect::knowledge_absorption ? "-" : std::string(to_string(r.vote));
  std::string missing = r.missing_count ? std::to_string(*r.missing_count) : "";
  return fmt::format("{}\t{}\t{}\t{}\t{}\t{}", r.task_name, r.sample_id, to_string(r.aspect),
                     r.annotator_id, vote, missing);
}

AnnotationRecord annotation_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, e.what());
  }
  auto str = [&](const char* k) -> std::string {
    if (!j.contains(k) || !j[k].is_string())
      throw Error(Errc::ParseError, std::string("annotation field '") + k + "' must be a string");
    return j[k].get<std::string>();
  };
  std::vector<std::string> fields{str("task"), str("sample_id"), str("aspect"), str("annotator_id")};
  fields.push_back(j.contains("vote") && j["vote"].is_string() ? j["vote"].get<std::string>() : "-");
  if (j.contains("missing_count") && !j["missing_count"].is_null()) {
    if (!j["missing_count"].is_number_integer())
      throw Error(Errc::ParseError, "missing_count must be an integer");
    fields.push_back(std::to_string(j["missing_count"].get<int>()));
  }
  return record_from_fields(fields, 1);
}

std::string annotation_to_json(const AnnotationRecord& r) {
  json j = {{"task", r.task_name},       {"sample_id", r.sample_id},
            {"aspect", to_string(r.aspect)}, {"annotator_id", r.annotator_id},
            {"vote", to_string(r.vote)}};
  if (r.missing_count) j["missing_count"] = *r.missing_count;
  return j.dump();
}

std::string render_report_table(const MetricReport& report) {
  const auto& cols = report.core_order;
  std::vector<Aspect> rows;
  for (Aspect a : kAllAspects)
    if (report.averages.count(a)) rows.push_back(a);

  auto cell = [](const Percent& p) { return p ? format_percent(*p) : std::string("—"); };
  std::string out = fmt::format("regime: knowledge_absorption={} na={}\n", to_string(report.regime.ka),
                                to_string(report.regime.na));
  out += fmt::format("{:<22}", "aspect");
  for (const auto& c : cols) out += fmt::format("{:>15}", c);
  out += fmt::format("{:>10}\n", "avg.");
  for (Aspect a : rows) {
    out += fmt::format("{:<22}", to_string(a));
    for (const auto& c : cols) {
      const auto& task = report.per_task.at(c);
      auto it = task.find(a);
      std::string v = it == task.end() ? "" : cell(it->second);
      // "—" is 3 bytes but one column wide
      out += fmt::format("{:>{}}", v, v == "—" ? 17 : 15);
    }
    std::string avg = cell(report.averages.at(a));
    out += fmt::format("{:>{}}\n", avg, avg == "—" ? 12 : 10);
  }
  return out;
}

std::string report_to_json(const MetricReport& report) {
  json per_task = json::object();
  for (const auto& [task, cells] : report.per_task) {
    json row = json::object();
    for (const auto& [aspect, p] : cells) row[std::string(to_string(aspect))] = percent_json(p);
    per_task[task] = std::move(row);
  }
  json averages = json::object();
  for (const auto& [aspect, p] : report.averages)
    averages[std::string(to_string(aspect))] = percent_json(p);
  json doc = {{"regime",
               {{"knowledge_absorption", to_string(report.regime.ka)},
                {"na", to_string(report.regime.na)}}},
              {"task_order", report.core_order},
              {"per_task", std::move(per_task)},
              {"averages", std::move(averages)}};
  return doc.dump(2);
}

}  // namespace hmt
