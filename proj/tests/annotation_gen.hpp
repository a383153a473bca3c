#pragma once

#include <random>
#include <string>
#include <vector>

#include "hmt/evaluation.hpp"

namespace hmt::test {

// Random but well-formed record sets: complete triples, legal NA use,
// missing_count within the bank.
inline std::vector<AnnotationRecord> random_annotations(std::mt19937_64& rng, const TaskCatalog& catalog,
                                                        int max_samples) {
  std::vector<AnnotationRecord> out;
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<unsigned>(n)); };
  const Label labels[] = {Label::yes, Label::no, Label::not_applicable};
  for (const TaskSpec* task : catalog.core_tasks()) {
    const int samples = 1 + pick(max_samples);
    const int bank = static_cast<int>(task->question_bank.size());
    // Skew per task so some cells are lopsided.
    const int yes_bias = pick(4);
    for (int s = 0; s < samples; ++s) {
      const std::string sample = task->name + "#" + std::to_string(s);
      for (Aspect a : kAllAspects) {
        for (int k = 0; k < 3; ++k) {
          AnnotationRecord r{task->name, sample, a, "ann" + std::to_string(k), Label::yes, std::nullopt};
          if (a == Aspect::knowledge_absorption) {
            r.missing_count = pick(4) < yes_bias ? 0 : pick(std::min(bank, 5) + 1);
            r.vote = *r.missing_count == 0 ? Label::yes : Label::no;
          } else if (allows_not_applicable(a)) {
            r.vote = pick(4) < yes_bias ? Label::yes : labels[pick(3)];
          } else {
            r.vote = pick(4) < yes_bias ? Label::yes : labels[pick(2)];
          }
          out.push_back(std::move(r));
        }
      }
    }
  }
  return out;
}

}  // namespace hmt::test
