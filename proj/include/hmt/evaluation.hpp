#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hmt/prompt_engine.hpp"
#include "hmt/task_registry.hpp"

namespace hmt {

enum class Aspect {
  q_validity,
  q_relevance,
  validity,
  knowledge_absorption,
  relevance,
  robustness,
  coherence,
};

inline constexpr std::array<Aspect, 7> kAllAspects{
    Aspect::q_validity, Aspect::q_relevance, Aspect::validity, Aspect::knowledge_absorption,
    Aspect::relevance,  Aspect::robustness,  Aspect::coherence};

std::string_view to_string(Aspect a) noexcept;
std::optional<Aspect> parse_aspect(std::string_view s) noexcept;
bool allows_not_applicable(Aspect a) noexcept;

enum class Label { yes, no, not_applicable };

std::string_view to_string(Label l) noexcept;
std::optional<Label> parse_label(std::string_view s) noexcept;

enum class KaRegime { tolerant, strict };
enum class NaRegime { na_excluded, na_as_no };

std::string_view to_string(KaRegime r) noexcept;
std::string_view to_string(NaRegime r) noexcept;

struct Regime {
  KaRegime ka = KaRegime::tolerant;
  NaRegime na = NaRegime::na_excluded;
};

/// One annotator's judgement of one sample on one aspect. For
/// knowledge_absorption the judgement is missing_count (QA pairs the output
/// failed to absorb); `vote` is derived per regime.
struct AnnotationRecord {
  std::string task_name;
  std::string sample_id;
  Aspect aspect = Aspect::validity;
  std::string annotator_id;
  Label vote = Label::yes;
  std::optional<int> missing_count;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

/// Exact non-negative fraction.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Ratio make(std::int64_t num, std::int64_t den);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

Ratio operator+(Ratio a, Ratio b);
Ratio operator/(Ratio a, std::int64_t k);

/// Two decimals, half-up.
std::string format_percent(const Ratio& r);

/// A percentage cell; nullopt is the undefined marker (empty denominator).
using Percent = std::optional<Ratio>;

struct MetricReport {
  std::map<std::string, std::map<Aspect, Percent>> per_task;
  std::map<Aspect, Percent> averages;
  Regime regime;
  std::vector<std::string> core_order;  // column order for printing
};

/// Majority of exactly three votes under the NA regime. Throws Error{WrongArity}.
Label majority_label(const std::vector<Label>& votes, NaRegime regime);

/// 1 for tasks with at most 4 bank questions, else 2. Throws Error{EmptyBank}.
int tolerance_for(const TaskSpec& task);

inline bool score_sample_ka(int missing_count, int tolerance) { return missing_count <= tolerance; }

/// Percentage of `yes` labels; NA labels leave the denominator under
/// na_excluded. nullopt when every label is excluded.
Percent task_score(const std::vector<Label>& sample_labels, NaRegime regime);

/// Per-task label tallies; the unit of the parallel reduction.
struct LabelCounts {
  std::int64_t yes = 0;
  std::int64_t no = 0;
  std::int64_t na = 0;

  LabelCounts& operator+=(const LabelCounts& o) {
    yes += o.yes;
    no += o.no;
    na += o.na;
    return *this;
  }
  void add(Label l) { (l == Label::yes ? yes : l == Label::no ? no : na) += 1; }
  Percent score(NaRegime regime) const;
};

/// Validates, groups into (task, sample, aspect) triples and scores them.
/// Grouping of triples runs in parallel (OpenMP) when available.
MetricReport aggregate_report(const std::vector<AnnotationRecord>& records,
                              const TaskCatalog& catalog, Regime regime);

/// Single-threaded reference implementation of aggregate_report.
MetricReport aggregate_report_serial(const std::vector<AnnotationRecord>& records,
                                     const TaskCatalog& catalog, Regime regime);

/// Heuristic check of which QA pairs an output failed to mention. Advisory only.
std::set<size_t> auto_absorption_check(const std::vector<QaPair>& qa_pairs, std::string_view output);

// --- annotation files -------------------------------------------------------

/// Tab-separated (task, sample_id, aspect, annotator_id, vote, missing_count)
/// or JSON Lines. Blank lines and '#' comments are skipped; an optional
/// header row starting with "task" is ignored.
std::vector<AnnotationRecord> parse_annotations(std::string_view text);
std::vector<AnnotationRecord> load_annotations_file(const std::string& path);
std::string format_annotation_tsv(const AnnotationRecord& r);
AnnotationRecord annotation_from_json(const std::string& json_text);
std::string annotation_to_json(const AnnotationRecord& r);

/// Validates a single record against the catalog (legal NA, missing_count bounds).
void validate_annotation(const AnnotationRecord& r, const TaskCatalog& catalog);

std::string render_report_table(const MetricReport& report);
std::string report_to_json(const MetricReport& report);

}  // namespace hmt
