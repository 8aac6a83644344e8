#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "esfo/events.hpp"

namespace esfo {

// Pixel offsets of the two Bresenham circles used by eFAST, in angular order.
inline constexpr std::array<std::pair<int, int>, 16> kCircle3 = {{
    {0, 3}, {1, 3}, {2, 2}, {3, 1}, {3, 0}, {3, -1}, {2, -2}, {1, -3},
    {0, -3}, {-1, -3}, {-2, -2}, {-3, -1}, {-3, 0}, {-3, 1}, {-2, 2}, {-1, 3},
}};
inline constexpr std::array<std::pair<int, int>, 20> kCircle4 = {{
    {0, 4}, {1, 4}, {2, 3}, {3, 2}, {4, 1}, {4, 0}, {4, -1}, {3, -2}, {2, -3}, {1, -4},
    {0, -4}, {-1, -4}, {-2, -3}, {-3, -2}, {-4, -1}, {-4, 0}, {-4, 1}, {-3, 2}, {-2, 3}, {-1, 4},
}};

// Events closer than this to the sensor border are never corners.
inline constexpr int kEfastBorder = 4;

// True if some contiguous arc of `min_arc`..`max_arc` samples on the circle
// holds timestamps strictly newer than every other sample on that circle.
bool has_newest_arc(std::span<const double> circle, int min_arc, int max_arc);

// Corner test for an event whose timestamp is already written into `sae`.
bool is_efast_corner(const Sae& sae, const Event& e);

// Replays the stream through a fresh SAE and returns the corner events in
// stream order.
std::vector<Event> detect_corners(const EventStream& stream);

}  // namespace esfo
