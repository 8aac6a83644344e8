#include "esfo/efast.hpp"

#include <algorithm>
#include <numeric>

namespace esfo {

bool has_newest_arc(std::span<const double> circle, int min_arc, int max_arc) {
  const int n = static_cast<int>(circle.size());
  if (n == 0 || min_arc > n) return false;

  // Rank samples newest first. The top-L set is a valid arc iff it is
  // contiguous and the L-th newest is strictly newer than the (L+1)-th.
  std::array<int, 32> order{};
  std::iota(order.begin(), order.begin() + n, 0);
  std::stable_sort(order.begin(), order.begin() + n,
                   [&](int a, int b) { return circle[a] > circle[b]; });

  std::array<bool, 32> member{};
  int boundaries = 0;  // positions i where member[i] != member[i+1]
  const auto flip = [&](int i) {
    const int prev = (i + n - 1) % n;
    const int next = (i + 1) % n;
    boundaries -= (member[prev] != member[i]) + (member[i] != member[next]);
    member[i] = true;
    boundaries += (member[prev] != member[i]) + (member[i] != member[next]);
  };

  const int upper = std::min(max_arc, n - 1);
  for (int len = 1; len <= upper; ++len) {
    flip(order[len - 1]);
    if (len < min_arc) continue;
    if (boundaries == 2 && circle[order[len - 1]] > circle[order[len]]) return true;
  }
  return false;
}

bool is_efast_corner(const Sae& sae, const Event& e) {
  const auto& sensor = sae.sensor();
  if (e.x < kEfastBorder || e.y < kEfastBorder ||
      e.x >= sensor.width - kEfastBorder || e.y >= sensor.height - kEfastBorder) {
    return false;
  }

  std::array<double, 16> inner{};
  for (std::size_t i = 0; i < kCircle3.size(); ++i) {
    inner[i] = sae.at(e.p, e.x + kCircle3[i].first, e.y + kCircle3[i].second);
  }
  if (!has_newest_arc(inner, 3, 6)) return false;

  std::array<double, 20> outer{};
  for (std::size_t i = 0; i < kCircle4.size(); ++i) {
    outer[i] = sae.at(e.p, e.x + kCircle4[i].first, e.y + kCircle4[i].second);
  }
  return has_newest_arc(outer, 4, 8);
}

std::vector<Event> detect_corners(const EventStream& stream) {
  std::vector<Event> corners;
  if (stream.empty()) return corners;
  Sae sae(stream.sensor);
  for (const auto& e : stream.events) {
    sae.update(e);
    if (is_efast_corner(sae, e)) corners.push_back(e);
  }
  return corners;
}

}  // namespace esfo
