#pragma once

// Fuzzing, replay and injection attacks at the CAN boundary.
//
// Fuzzing and replay are in-path: they rewrite payloads of frames travelling
// between the controller segment and the engine segment. Injection adds
// attacker frames on the shared segment. All three are identity outside the
// attack window [t_start, t_start + duration).

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpsim/canbus.hpp"

namespace cpsim::attacks {

using canbus::Frame;
using canbus::Tick;

enum class AttackKind { kNone, kFuzzing, kReplay, kInjection };

enum class Target { kEngineSpeed, kThrottleRequest };

enum class FuzzMode {
  kAdditive,  // decoded value + offset
  kFixed,     // learned stationary value + offset
};

/// Learned stationary value is the mean over this span before t_start.
inline constexpr Tick kLearnWindowMs = 1000;

struct AttackConfig {
  AttackKind kind = AttackKind::kNone;
  double t_start = 10.0;        // [s]
  double duration = 2.0;        // [s]
  double offset = 1e-6;         // signal units of the target
  int rate_multiplier = 10;     // injection only
  double record_window = 2.0;   // [s], replay only
  Target target = Target::kThrottleRequest;
  FuzzMode fuzz_mode = FuzzMode::kAdditive;

  Tick start_tick() const;
  Tick end_tick() const;
  bool active(Tick now) const { return now >= start_tick() && now < end_tick(); }
};

/// Throws ConfigError on a violated invariant.
void validate(const AttackConfig& cfg);

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view text);
std::string to_string(Target target);
Target parse_target(std::string_view text);
std::string to_string(FuzzMode mode);
FuzzMode parse_fuzz_mode(std::string_view text);

const canbus::MessageSpec& target_message(Target target);

struct Sample {
  Tick tick = 0;
  double value = 0.0;
};

struct ReplayBuffer {
  std::vector<Sample> outputs;  // engine speed [rpm]
  std::vector<Sample> inputs;   // throttle request
  std::size_t cursor = 0;
  std::size_t capacity = 0;

  bool full() const { return outputs.size() == capacity; }
};

/// Empty buffer sized for record_window at the engine-speed cycle.
ReplayBuffer make_replay_buffer(const AttackConfig& cfg);

Frame fuzz_transform(const Frame& frame, const AttackConfig& cfg,
                     Tick now, double learned_value);

/// Records an ES or TR frame delivered inside the recording window.
void replay_record(ReplayBuffer& buffer, const AttackConfig& cfg, Tick now,
                   const Frame& frame);

/// During the window: TR carries learned_value + offset and ES frames are
/// overwritten, in order, with the recorded engine speeds.
std::vector<Frame> replay_transform(std::span<const Frame> frames,
                                    const AttackConfig& cfg, ReplayBuffer& buffer,
                     Tick now, double learned_value);

/// Attacker TR frames due at `now` (rate_multiplier per TR cycle).
std::vector<Frame> injection_generate(const AttackConfig& cfg, Tick now,
                                      double learned_value);

/// Stateful attacker stepped by the simulation loop.
class Attacker {
 public:
  explicit Attacker(AttackConfig cfg);

  const AttackConfig& config() const noexcept { return cfg_; }

  /// Passive observation of a delivered frame (learning and recording).
  void observe(Tick now, const Frame& frame);

  /// In-path rewrite of a frame before it reaches the other segment.
  Frame tamper(Tick now, const Frame& frame);

  /// Frames the attacker transmits on the shared segment at `now`.
  std::vector<Frame> inject(Tick now);

  /// Mean decoded TR value over the learning window; throws AttackError when
  /// nothing was observed.
  double learned_value() const;

  const ReplayBuffer& replay_buffer() const noexcept { return buffer_; }

 private:
  AttackConfig cfg_;
  ReplayBuffer buffer_;
  double learn_sum_ = 0.0;
  std::size_t learn_count_ = 0;
};

}  // namespace cpsim::attacks
