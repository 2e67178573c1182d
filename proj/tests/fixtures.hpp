#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "prefbench/dataset.hpp"

namespace prefbench::test_util {

struct GroupShape {
  std::size_t n_groups;
  std::size_t images_per_group;
};

// Random strict rankings over synthetic ids; only the structure is meaningful.
inline Dataset structured_dataset(const std::vector<GroupShape>& shapes, std::size_t annotators,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset ds;
  std::size_t next = 0;
  for (const auto& shape : shapes) {
    for (std::size_t g = 0; g < shape.n_groups; ++g, ++next) {
      const std::string pid = "q" + std::to_string(next);
      ds.prompts.push_back({pid, "prompt number " + std::to_string(next),
                            kAllStyles[next % 4]});
      Group group;
      group.prompt_id = pid;
      for (std::size_t i = 0; i < shape.images_per_group; ++i) {
        group.image_ids.push_back(pid + "_img" + std::to_string(i));
      }
      for (std::size_t a = 0; a < annotators; ++a) {
        RankingAnnotation ann{"ann" + std::to_string(a), group.image_ids};
        std::shuffle(ann.ranking.begin(), ann.ranking.end(), rng);
        group.annotations.push_back(std::move(ann));
      }
      ds.groups.push_back(std::move(group));
    }
  }
  return ds;
}

}  // namespace prefbench::test_util
