#pragma once

// Idealized CAN segment on a 1 ms tick: extended data frames, a two-message
// catalog (engine speed, throttle request), 32-bit float signal codec and
// identifier-priority arbitration with zero transmission time.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cpsim::canbus {

using Tick = std::int64_t;  // bus ticks of 1 ms

inline constexpr std::uint32_t kMaxExtendedId = (1u << 29) - 1;

enum class Origin : std::uint8_t { kLegit, kAttacker };

struct Frame {
  std::uint32_t id = 0;
  std::uint8_t dlc = 0;
  std::array<std::uint8_t, 8> payload{};
  Tick queued_at = 0;
  Origin origin = Origin::kLegit;

  /// Throws EncodeError unless id fits 29 bits and data has at most 8 bytes.
  static Frame make(std::uint32_t id, std::span<const std::uint8_t> data,
                    Origin origin = Origin::kLegit);

  std::span<const std::uint8_t> data() const { return {payload.data(), dlc}; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

enum class Signal { kEngineSpeedRpm, kThrottleRequest };

struct MessageSpec {
  std::string name;
  std::uint32_t id = 0;
  int cycle_ms = 10;
  Signal signal = Signal::kEngineSpeedRpm;
  int width_bits = 32;
};

/// Engine speed [rpm], sent by the speed sensor ECU.
const MessageSpec& engine_speed_message();
/// Throttle request (open area [m^2]), sent by the controller.
const MessageSpec& throttle_request_message();

/// Largest throttle value accepted by the codec.
inline constexpr double kThrottleCodecMax = 1.05;

/// Little-endian IEEE-754 binary32 in payload bytes 0-3. Throws EncodeError
/// for non-finite or out-of-range values.
std::array<std::uint8_t, 4> encode_signal(double value, const MessageSpec& spec);
double decode_signal(std::span<const std::uint8_t> payload,
                     const MessageSpec& spec);

/// Frame carrying one encoded signal (dlc 4).
Frame make_signal_frame(double value, const MessageSpec& spec,
                        Origin origin = Origin::kLegit);

/// True when a periodic message is due at `now`.
bool schedule_periodic(const MessageSpec& spec, Tick now, int phase = 0);

struct Delivery {
  Tick tick = 0;
  Frame frame;
};

class BusState {
 public:
  /// Timestamps the frame with the current tick and appends it to the
  /// arbitration queue.
  void queue(Frame frame);

  /// Delivers every pending frame in ascending id order, FIFO among equal
  /// ids. May run several times per tick; each call is one arbitration round.
  std::vector<Frame> arbitrate();

  /// Moves to the next tick. Frames still pending are delivered first.
  std::vector<Frame> advance();

  Tick now() const noexcept { return tick_; }
  std::size_t pending() const noexcept { return pending_.size(); }
  std::size_t queued_total() const noexcept { return queued_total_; }
  const std::vector<Delivery>& log() const noexcept { return log_; }

 private:
  Tick tick_ = 0;
  std::vector<Frame> pending_;
  std::vector<Delivery> log_;
  std::size_t queued_total_ = 0;
};

/// Frame log as CSV: tick_ms,id_hex,dlc,payload_hex,origin
void write_frame_log(std::ostream& os, const std::vector<Delivery>& log);

std::string to_string(Origin origin);

}  // namespace cpsim::canbus
