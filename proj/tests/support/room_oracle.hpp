// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <vector>

#include "dereverb/room/room.hpp"

namespace dereverb::testing {

struct OracleImage {
  Vec3 pos;
  int wall = 0, floor = 0, ceiling = 0;
};

// Reflects the source across the six surfaces recursively, never across the
// same surface twice in a row, and deduplicates coincident images.
std::vector<OracleImage> mirror_enumeration(const RoomSpec& r, int max_order) {
  std::vector<OracleImage> frontier{{r.source}};
  std::vector<int> last{-1};
  std::vector<OracleImage> all = frontier;
  const Vec3 d = r.dims();
  for (int order = 1; order <= max_order; ++order) {
    std::vector<OracleImage> next;
    std::vector<int> next_last;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      for (int plane = 0; plane < 6; ++plane) {
        if (plane == last[i]) continue;
        const int axis = plane / 2;
        const double at = plane % 2 == 0 ? 0.0 : d[axis];
        OracleImage img = frontier[i];
        img.pos[axis] = 2 * at - img.pos[axis];
        if (axis < 2) img.wall++;
        else if (plane == 4) img.floor++;
        else img.ceiling++;
        next.push_back(img);
        next_last.push_back(plane);
      }
    }
    frontier = next;
    last = next_last;
    for (const auto& img : next) {
      const bool dup = std::any_of(all.begin(), all.end(), [&](const OracleImage& o) {
        return distance(o.pos, img.pos) < 1e-9;
      });
      if (!dup) all.push_back(img);
    }
  }
  return all;
}

}  // namespace dereverb::testing
