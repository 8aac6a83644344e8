#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

namespace esfo {

struct Event {
  double t = 0.0;  // seconds
  int x = 0;
  int y = 0;
  int p = 1;  // +1 or -1

  bool operator==(const Event&) const = default;
};

struct SensorSize {
  int width = 346;
  int height = 260;

  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
};

struct EventStream {
  std::vector<Event> events;
  SensorSize sensor;
  // Set when the input was not already time ordered and had to be sorted.
  bool resorted = false;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
  // Timestamp of the last event, or 0 for an empty stream.
  double end_time() const { return events.empty() ? 0.0 : events.back().t; }
};

enum class EventFormat {
  csv,   // "t,x,y,p" with optional header line
  text,  // whitespace separated "t x y p", '#' comments
};

// Reads an event file. Polarity 0 (or -1) on disk becomes -1 in memory.
// Throws ParseError naming the 1-based line of a malformed record and
// ValidationError for coordinates outside `sensor`.
EventStream load_events(const std::filesystem::path& path, EventFormat format,
                        SensorSize sensor = {});

// Writes the CSV format with a `t,x,y,p` header. Timestamps use the shortest
// representation that round-trips exactly.
void save_events(const std::filesystem::path& path, const EventStream& stream);

// Stable sort by timestamp. Returns true if the order changed.
bool sort_events(std::vector<Event>& events);

// Surface of Active Events: per-polarity grid of the latest timestamp.
class Sae {
 public:
  static constexpr double kNever = -std::numeric_limits<double>::infinity();

  explicit Sae(SensorSize sensor);

  // Throws BoundsError if the event lies outside the sensor.
  void update(const Event& e);

  double at(int polarity, int x, int y) const {
    return grid(polarity)[index(x, y)];
  }
  const SensorSize& sensor() const { return sensor_; }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * sensor_.width + x;
  }
  const std::vector<double>& grid(int polarity) const {
    return polarity > 0 ? positive_ : negative_;
  }

  SensorSize sensor_;
  std::vector<double> positive_;
  std::vector<double> negative_;
};

// Functional form of Sae::update.
Sae update_sae(Sae sae, const Event& e);

}  // namespace esfo
