#include <doctest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "cpsim/canbus.hpp"
#include "cpsim/errors.hpp"
#include "cpsim/selfcheck.hpp"

using namespace cpsim;
using namespace cpsim::canbus;

namespace {

const MessageSpec& es() { return engine_speed_message(); }
const MessageSpec& tr() { return throttle_request_message(); }

// Reference encoder: memcpy of the float, bytes rearranged to little endian
// by shifting rather than relying on host order.
std::array<std::uint8_t, 4> reference_encode(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  return {static_cast<std::uint8_t>(bits), static_cast<std::uint8_t>(bits >> 8),
          static_cast<std::uint8_t>(bits >> 16), static_cast<std::uint8_t>(bits >> 24)};
}

Frame frame_with(std::uint32_t id, std::uint8_t tag) {
  const std::array<std::uint8_t, 1> data{tag};
  return Frame::make(id, data);
}

}  // namespace

TEST_CASE("message catalog") {
  CHECK(es().id == 0x10);
  CHECK(tr().id == 0x15);
  CHECK(es().cycle_ms == 10);
  CHECK(tr().cycle_ms == 10);
  CHECK(es().id < tr().id);
}

TEST_CASE("signal codec") {
  SUBCASE("known encodings") {
    CHECK(encode_signal(0.0, es()) == std::array<std::uint8_t, 4>{0, 0, 0, 0});
    CHECK(encode_signal(4200.0, es()) ==
          std::array<std::uint8_t, 4>{0x00, 0x40, 0x83, 0x45});
    CHECK(encode_signal(4200.0, es()) == reference_encode(4200.0f));
  }
  SUBCASE("round trip is exact for binary32 values") {
    std::mt19937_64 gen(42);
    std::uniform_real_distribution<float> rpm(0.0f, 8000.0f), area(0.0f, 1.05f);
    for (int i = 0; i < 2000; ++i) {
      const float r = rpm(gen);
      const float a = area(gen);
      CHECK(decode_signal(encode_signal(r, es()), es()) == static_cast<double>(r));
      CHECK(decode_signal(encode_signal(a, tr()), tr()) == static_cast<double>(a));
      CHECK(encode_signal(r, es()) == reference_encode(r));
    }
    CHECK(selfcheck::codec_roundtrip_failures(10000, 3) == 0);
  }
  SUBCASE("round trip of a double is within binary32 precision") {
    const double v = 7.44e-5;
    CHECK(decode_signal(encode_signal(v, tr()), tr()) ==
          doctest::Approx(v).epsilon(6e-8));
  }
  SUBCASE("invalid values") {
    CHECK_THROWS_AS(encode_signal(-1.0, es()), EncodeError);
    CHECK_THROWS_AS(encode_signal(NAN, es()), EncodeError);
    CHECK_THROWS_AS(encode_signal(INFINITY, tr()), EncodeError);
    CHECK_THROWS_AS(encode_signal(1.06, tr()), EncodeError);
    CHECK_THROWS_AS(encode_signal(1e39, es()), EncodeError);
    const std::array<std::uint8_t, 3> short_payload{};
    CHECK_THROWS_AS(decode_signal(short_payload, es()), EncodeError);
  }
  SUBCASE("signal frames carry four bytes") {
    const Frame f = make_signal_frame(4200.0, es());
    CHECK(f.id == 0x10);
    CHECK(f.dlc == 4);
    CHECK(f.origin == Origin::kLegit);
    CHECK(make_signal_frame(1e-4, tr(), Origin::kAttacker).origin == Origin::kAttacker);
  }
}

TEST_CASE("frame construction limits") {
  const std::array<std::uint8_t, 9> nine{};
  CHECK_THROWS_AS(Frame::make(0x10, nine), EncodeError);
  CHECK_THROWS_AS(Frame::make(kMaxExtendedId + 1, {}), EncodeError);
  CHECK_NOTHROW(Frame::make(kMaxExtendedId, std::span(nine).first(8)));
}

TEST_CASE("periodic scheduling") {
  SUBCASE("phase 0 fires on multiples of the cycle") {
    int count = 0;
    for (Tick t = 0; t < 100; ++t) {
      if (schedule_periodic(es(), t)) {
        CHECK(t % 10 == 0);
        ++count;
      }
    }
    CHECK(count == 10);
  }
  SUBCASE("phase 3") {
    CHECK(schedule_periodic(es(), 3, 3));
    CHECK(schedule_periodic(es(), 13, 3));
    CHECK_FALSE(schedule_periodic(es(), 10, 3));
  }
  SUBCASE("cycle of one fires every tick") {
    MessageSpec every = es();
    every.cycle_ms = 1;
    for (Tick t = 0; t < 20; ++t) CHECK(schedule_periodic(every, t));
  }
}

TEST_CASE("arbitration") {
  SUBCASE("lower id first, FIFO among equal ids") {
    BusState bus;
    bus.queue(frame_with(0x15, 1));
    bus.queue(frame_with(0x10, 2));
    bus.queue(frame_with(0x15, 3));
    bus.queue(frame_with(0x10, 4));
    const auto out = bus.arbitrate();
    REQUIRE(out.size() == 4);
    CHECK(out[0].payload[0] == 2);
    CHECK(out[1].payload[0] == 4);
    CHECK(out[2].payload[0] == 1);
    CHECK(out[3].payload[0] == 3);
    CHECK(bus.pending() == 0);
  }
  SUBCASE("random queues: sorted, stable and conserved") {
    std::mt19937_64 gen(11);
    std::uniform_int_distribution<std::uint32_t> id(0, 6);
    BusState bus;
    std::size_t queued = 0, delivered = 0;
    for (int tick = 0; tick < 200; ++tick) {
      const int n = static_cast<int>(gen() % 6);
      for (int i = 0; i < n; ++i) {
        bus.queue(frame_with(id(gen), static_cast<std::uint8_t>(i)));
        ++queued;
      }
      const auto out = bus.arbitrate();
      delivered += out.size();
      for (std::size_t i = 1; i < out.size(); ++i) {
        CHECK(out[i - 1].id <= out[i].id);
        if (out[i - 1].id == out[i].id) CHECK(out[i - 1].payload[0] < out[i].payload[0]);
      }
      bus.advance();
    }
    CHECK(queued == delivered);
    CHECK(bus.queued_total() == queued);
    CHECK(bus.log().size() == delivered);
  }
  SUBCASE("ten attacker frames and one legit frame all deliver in one tick") {
    BusState bus;
    for (int i = 0; i < 10; ++i) bus.queue(make_signal_frame(8e-5, tr(), Origin::kAttacker));
    bus.queue(make_signal_frame(7.4e-5, tr()));
    const auto out = bus.arbitrate();
    REQUIRE(out.size() == 11);
    for (int i = 0; i < 10; ++i) CHECK(out[i].origin == Origin::kAttacker);
    CHECK(out[10].origin == Origin::kLegit);
  }
  SUBCASE("queued frames are timestamped and late frames flushed on advance") {
    BusState bus;
    bus.advance();
    bus.advance();
    bus.queue(frame_with(0x10, 0));
    const auto late = bus.advance();
    REQUIRE(late.size() == 1);
    CHECK(late[0].queued_at == 2);
    CHECK(bus.log().back().tick == 2);
    CHECK(bus.now() == 3);
  }
}

TEST_CASE("frame log format") {
  BusState bus;
  bus.queue(make_signal_frame(4200.0, es()));
  bus.queue(make_signal_frame(0.0, tr(), Origin::kAttacker));
  bus.arbitrate();
  std::ostringstream os;
  write_frame_log(os, bus.log());
  CHECK(os.str() ==
        "tick_ms,id_hex,dlc,payload_hex,origin\n"
        "0,0x10,4,00408345,legit\n"
        "0,0x15,4,00000000,attacker\n");
}
