#include "cpsim/canbus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "cpsim/errors.hpp"

namespace cpsim::canbus {

Frame Frame::make(std::uint32_t id, std::span<const std::uint8_t> data,
                  Origin origin) {
  if (id > kMaxExtendedId) {
    throw EncodeError(fmt::format("identifier 0x{:x} exceeds 29 bits", id));
  }
  if (data.size() > 8) {
    throw EncodeError(fmt::format("payload of {} bytes exceeds 8", data.size()));
  }
  Frame f;
  f.id = id;
  f.dlc = static_cast<std::uint8_t>(data.size());
  std::copy(data.begin(), data.end(), f.payload.begin());
  f.origin = origin;
  return f;
}

const MessageSpec& engine_speed_message() {
  static const MessageSpec spec{"ES", 0x10, 10, Signal::kEngineSpeedRpm, 32};
  return spec;
}

const MessageSpec& throttle_request_message() {
  static const MessageSpec spec{"TR", 0x15, 10, Signal::kThrottleRequest, 32};
  return spec;
}

std::array<std::uint8_t, 4> encode_signal(double value, const MessageSpec& spec) {
  if (!std::isfinite(value)) {
    throw EncodeError(fmt::format("{}: cannot encode non-finite value", spec.name));
  }
  if (value < 0.0) {
    throw EncodeError(fmt::format("{}: negative value {}", spec.name, value));
  }
  if (spec.signal == Signal::kThrottleRequest && value > kThrottleCodecMax) {
    throw EncodeError(
        fmt::format("{}: throttle value {} out of range", spec.name, value));
  }
  const float narrowed = static_cast<float>(value);
  if (!std::isfinite(narrowed)) {
    throw EncodeError(
        fmt::format("{}: value {} overflows binary32", spec.name, value));
  }
  const auto bits = std::bit_cast<std::uint32_t>(narrowed);
  return {static_cast<std::uint8_t>(bits & 0xff),
          static_cast<std::uint8_t>((bits >> 8) & 0xff),
          static_cast<std::uint8_t>((bits >> 16) & 0xff),
          static_cast<std::uint8_t>((bits >> 24) & 0xff)};
}

double decode_signal(std::span<const std::uint8_t> payload,
                     const MessageSpec& spec) {
  if (payload.size() < 4) {
    throw EncodeError(fmt::format("{}: payload of {} bytes is too short",
                                  spec.name, payload.size()));
  }
  const std::uint32_t bits = static_cast<std::uint32_t>(payload[0]) |
                             static_cast<std::uint32_t>(payload[1]) << 8 |
                             static_cast<std::uint32_t>(payload[2]) << 16 |
                             static_cast<std::uint32_t>(payload[3]) << 24;
  return static_cast<double>(std::bit_cast<float>(bits));
}

Frame make_signal_frame(double value, const MessageSpec& spec, Origin origin) {
  const auto bytes = encode_signal(value, spec);
  return Frame::make(spec.id, bytes, origin);
}

bool schedule_periodic(const MessageSpec& spec, Tick now, int phase) {
  const Tick cycle = spec.cycle_ms;
  return ((now % cycle) + cycle) % cycle == phase;
}

void BusState::queue(Frame frame) {
  frame.queued_at = tick_;
  pending_.push_back(frame);
  ++queued_total_;
}

std::vector<Frame> BusState::arbitrate() {
  std::vector<Frame> delivered;
  delivered.swap(pending_);
  // Lower identifier wins arbitration; stable sort keeps queue order otherwise.
  std::stable_sort(delivered.begin(), delivered.end(),
                   [](const Frame& a, const Frame& b) { return a.id < b.id; });
  for (const Frame& f : delivered) log_.push_back({tick_, f});
  return delivered;
}

std::vector<Frame> BusState::advance() {
  auto late = arbitrate();
  ++tick_;
  return late;
}

void write_frame_log(std::ostream& os, const std::vector<Delivery>& log) {
  os << "tick_ms,id_hex,dlc,payload_hex,origin\n";
  for (const Delivery& d : log) {
    std::string hex;
    for (std::uint8_t b : d.frame.data()) hex += fmt::format("{:02x}", b);
    os << fmt::format("{},0x{:x},{},{},{}\n", d.tick, d.frame.id,
                      static_cast<int>(d.frame.dlc), hex, to_string(d.frame.origin));
  }
}

std::string to_string(Origin origin) {
  return origin == Origin::kLegit ? "legit" : "attacker";
}

}  // namespace cpsim::canbus
