#include "cpsim/attacks.hpp"

#include <cmath>

#include <fmt/format.h>

#include "cpsim/errors.hpp"

namespace cpsim::attacks {
namespace {

Tick to_ticks(double seconds) {
  return static_cast<Tick>(std::llround(seconds * 1000.0));
}

const canbus::MessageSpec& es() { return canbus::engine_speed_message(); }
const canbus::MessageSpec& tr() { return canbus::throttle_request_message(); }

Frame with_value(const Frame& frame, double value,
                 const canbus::MessageSpec& spec) {
  Frame out = frame;
  const auto bytes = canbus::encode_signal(value, spec);
  std::copy(bytes.begin(), bytes.end(), out.payload.begin());
  out.dlc = static_cast<std::uint8_t>(bytes.size());
  return out;
}

}  // namespace

Tick AttackConfig::start_tick() const { return to_ticks(t_start); }
Tick AttackConfig::end_tick() const { return to_ticks(t_start + duration); }

void validate(const AttackConfig& cfg) {
  if (cfg.kind == AttackKind::kNone) return;
  if (!(cfg.t_start >= 0.0)) {
    throw ConfigError(fmt::format("attack start {} s is negative", cfg.t_start));
  }
  if (!(cfg.duration > 0.0)) {
    throw ConfigError(fmt::format("attack duration {} s must be positive",
                                  cfg.duration));
  }
  if (!std::isfinite(cfg.offset)) {
    throw ConfigError("attack offset must be finite");
  }
  if (cfg.rate_multiplier < 2) {
    throw ConfigError(fmt::format("rate multiplier {} must be at least 2",
                                  cfg.rate_multiplier));
  }
  if (cfg.kind == AttackKind::kReplay) {
    if (!(cfg.record_window > 0.0)) {
      throw ConfigError("replay needs a positive recording window");
    }
    if (cfg.t_start < cfg.record_window) {
      throw ConfigError("replay recording window must precede the attack start");
    }
    if (cfg.duration > cfg.record_window) {
      throw ConfigError(
          "replay attack cannot last longer than the recording window");
    }
  }
}

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kNone: return "none";
    case AttackKind::kFuzzing: return "fuzzing";
    case AttackKind::kReplay: return "replay";
    case AttackKind::kInjection: return "injection";
  }
  return "none";
}

AttackKind parse_attack_kind(std::string_view text) {
  if (text == "none") return AttackKind::kNone;
  if (text == "fuzzing" || text == "fuzz") return AttackKind::kFuzzing;
  if (text == "replay") return AttackKind::kReplay;
  if (text == "injection" || text == "inject") return AttackKind::kInjection;
  throw ConfigError(fmt::format("unknown attack kind '{}'", text));
}

std::string to_string(Target target) {
  return target == Target::kEngineSpeed ? "ES" : "TR";
}

Target parse_target(std::string_view text) {
  if (text == "ES") return Target::kEngineSpeed;
  if (text == "TR") return Target::kThrottleRequest;
  throw ConfigError(fmt::format("unknown attack target '{}'", text));
}

std::string to_string(FuzzMode mode) {
  return mode == FuzzMode::kAdditive ? "additive" : "fixed";
}

FuzzMode parse_fuzz_mode(std::string_view text) {
  if (text == "additive") return FuzzMode::kAdditive;
  if (text == "fixed") return FuzzMode::kFixed;
  throw ConfigError(fmt::format("unknown fuzz mode '{}'", text));
}

const canbus::MessageSpec& target_message(Target target) {
  return target == Target::kEngineSpeed ? es() : tr();
}

ReplayBuffer make_replay_buffer(const AttackConfig& cfg) {
  ReplayBuffer buffer;
  buffer.capacity =
      static_cast<std::size_t>(to_ticks(cfg.record_window) / es().cycle_ms);
  buffer.outputs.reserve(buffer.capacity);
  buffer.inputs.reserve(buffer.capacity);
  return buffer;
}

Frame fuzz_transform(const Frame& frame, const AttackConfig& cfg,
                     Tick now, double learned_value) {
  const auto& spec = target_message(cfg.target);
  if (!cfg.active(now) || frame.id != spec.id) return frame;
  double value = 0.0;
  try {
    value = cfg.fuzz_mode == FuzzMode::kAdditive
                ? canbus::decode_signal(frame.data(), spec) + cfg.offset
                : learned_value + cfg.offset;
    return with_value(frame, value, spec);
  } catch (const EncodeError& e) {
    throw AttackError(fmt::format("fuzzing at tick {}: {}", now, e.what()));
  }
}

void replay_record(ReplayBuffer& buffer, const AttackConfig& cfg, Tick now,
                   const Frame& frame) {
  const Tick begin = cfg.start_tick() - to_ticks(cfg.record_window);
  if (now < begin || now >= cfg.start_tick()) return;
  std::vector<Sample>* series = nullptr;
  const canbus::MessageSpec* spec = nullptr;
  if (frame.id == es().id) {
    series = &buffer.outputs;
    spec = &es();
  } else if (frame.id == tr().id && frame.origin == canbus::Origin::kLegit) {
    series = &buffer.inputs;
    spec = &tr();
  } else {
    return;
  }
  if (series->size() >= buffer.capacity) {
    throw ConfigError(fmt::format(
        "replay buffer overflow at tick {} (capacity {})", now, buffer.capacity));
  }
  series->push_back({now, canbus::decode_signal(frame.data(), *spec)});
}

std::vector<Frame> replay_transform(std::span<const Frame> frames,
                                    const AttackConfig& cfg, ReplayBuffer& buffer,
                                    Tick now, double learned_value) {
  std::vector<Frame> out(frames.begin(), frames.end());
  if (!cfg.active(now)) return out;
  for (Frame& f : out) {
    if (f.id == tr().id) {
      f = with_value(f, learned_value + cfg.offset, tr());
    } else if (f.id == es().id) {
      if (buffer.cursor >= buffer.outputs.size()) {
        throw AttackError(fmt::format(
            "replay buffer exhausted at tick {} after {} samples", now,
            buffer.outputs.size()));
      }
      f = with_value(f, buffer.outputs[buffer.cursor++].value, es());
    }
  }
  return out;
}

std::vector<Frame> injection_generate(const AttackConfig& cfg, Tick now,
                                      double learned_value) {
  std::vector<Frame> out;
  if (!cfg.active(now)) return out;
  // Spread rate_multiplier frames evenly over one legit cycle: the number due
  // in tick k is ceil((k+1) r / c) - ceil(k r / c).
  const Tick cycle = tr().cycle_ms;
  const Tick rate = cfg.rate_multiplier;
  const Tick k = now - cfg.start_tick();
  auto ceil_div = [](Tick a, Tick b) { return (a + b - 1) / b; };
  const Tick due = ceil_div((k + 1) * rate, cycle) - ceil_div(k * rate, cycle);
  for (Tick i = 0; i < due; ++i) {
    out.push_back(canbus::make_signal_frame(learned_value + cfg.offset, tr(),
                                            canbus::Origin::kAttacker));
  }
  return out;
}

Attacker::Attacker(AttackConfig cfg) : cfg_(cfg) {
  validate(cfg_);
  if (cfg_.kind == AttackKind::kReplay) buffer_ = make_replay_buffer(cfg_);
}

void Attacker::observe(Tick now, const Frame& frame) {
  if (cfg_.kind == AttackKind::kNone) return;
  if (frame.id == tr().id && frame.origin == canbus::Origin::kLegit &&
      now >= cfg_.start_tick() - kLearnWindowMs && now < cfg_.start_tick()) {
    learn_sum_ += canbus::decode_signal(frame.data(), tr());
    ++learn_count_;
  }
  if (cfg_.kind == AttackKind::kReplay) replay_record(buffer_, cfg_, now, frame);
}

double Attacker::learned_value() const {
  if (learn_count_ == 0) {
    throw AttackError("no throttle requests observed during the learning window");
  }
  return learn_sum_ / static_cast<double>(learn_count_);
}

Frame Attacker::tamper(Tick now, const Frame& frame) {
  if (!cfg_.active(now)) return frame;
  switch (cfg_.kind) {
    case AttackKind::kFuzzing: {
      const double learned =
          cfg_.fuzz_mode == FuzzMode::kFixed ? learned_value() : 0.0;
      return fuzz_transform(frame, cfg_, now, learned);
    }
    case AttackKind::kReplay: {
      if (!buffer_.full()) {
        throw AttackError(fmt::format(
            "replay started with {} of {} recorded samples",
            buffer_.outputs.size(), buffer_.capacity));
      }
      const double learned = frame.id == tr().id ? learned_value() : 0.0;
      return replay_transform(std::span(&frame, 1), cfg_, buffer_, now, learned)
          .front();
    }
    default:
      return frame;
  }
}

std::vector<Frame> Attacker::inject(Tick now) {
  if (cfg_.kind != AttackKind::kInjection || !cfg_.active(now)) return {};
  return injection_generate(cfg_, now, learned_value());
}

}  // namespace cpsim::attacks
