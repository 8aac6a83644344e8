#include "esfo/events.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <string>
#include <string_view>

#include "esfo/errors.hpp"

namespace esfo {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* name) {
  field = trim(field);
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(line, std::string("bad ") + name + " field '" +
                               std::string(field) + "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view s, EventFormat format) {
  std::vector<std::string_view> fields;
  if (format == EventFormat::csv) {
    std::size_t start = 0;
    while (true) {
      const auto pos = s.find(',', start);
      fields.push_back(s.substr(start, pos - start));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
  } else {
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
      if (i >= s.size()) break;
      const auto start = i;
      while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
      fields.push_back(s.substr(start, i - start));
    }
  }
  return fields;
}

}  // namespace

bool sort_events(std::vector<Event>& events) {
  const auto by_time = [](const Event& a, const Event& b) { return a.t < b.t; };
  if (std::is_sorted(events.begin(), events.end(), by_time)) return false;
  std::stable_sort(events.begin(), events.end(), by_time);
  return true;
}

EventStream load_events(const std::filesystem::path& path, EventFormat format,
                        SensorSize sensor) {
  std::ifstream file(path);
  if (!file) throw Error("cannot open event file " + path.string());

  EventStream stream;
  stream.sensor = sensor;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(file, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (format == EventFormat::csv && line_no == 1 && line == "t,x,y,p") continue;

    const auto fields = split(line, format);
    if (fields.size() != 4) {
      throw ParseError(line_no, "expected 4 fields (t,x,y,p), got " +
                                    std::to_string(fields.size()));
    }
    Event e;
    e.t = parse_number<double>(fields[0], line_no, "t");
    e.x = parse_number<int>(fields[1], line_no, "x");
    e.y = parse_number<int>(fields[2], line_no, "y");
    const int p = parse_number<int>(fields[3], line_no, "p");
    if (p != 0 && p != 1 && p != -1) {
      throw ParseError(line_no, "polarity must be 0, 1 or -1");
    }
    e.p = p == 1 ? 1 : -1;
    if (!std::isfinite(e.t) || e.t < 0.0) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": timestamp must be finite and >= 0");
    }
    if (!sensor.contains(e.x, e.y)) {
      throw ValidationError("line " + std::to_string(line_no) + ": pixel (" +
                            std::to_string(e.x) + ", " + std::to_string(e.y) +
                            ") outside " + std::to_string(sensor.width) + "x" +
                            std::to_string(sensor.height) + " sensor");
    }
    stream.events.push_back(e);
  }
  stream.resorted = sort_events(stream.events);
  return stream;
}

void save_events(const std::filesystem::path& path, const EventStream& stream) {
  std::ofstream file(path);
  if (!file) throw Error("cannot write event file " + path.string());
  file << "t,x,y,p\n";
  char buf[64];
  for (const auto& e : stream.events) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), e.t);
    file.write(buf, res.ptr - buf);
    file << ',' << e.x << ',' << e.y << ',' << (e.p > 0 ? 1 : 0) << '\n';
  }
}

Sae::Sae(SensorSize sensor)
    : sensor_(sensor),
      positive_(static_cast<std::size_t>(sensor.width) * sensor.height, kNever),
      negative_(static_cast<std::size_t>(sensor.width) * sensor.height, kNever) {}

void Sae::update(const Event& e) {
  if (!sensor_.contains(e.x, e.y)) {
    throw BoundsError("event (" + std::to_string(e.x) + ", " +
                      std::to_string(e.y) + ") outside SAE");
  }
  (e.p > 0 ? positive_ : negative_)[index(e.x, e.y)] = e.t;
}

Sae update_sae(Sae sae, const Event& e) {
  sae.update(e);
  return sae;
}

}  // namespace esfo
