#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <thread>

#include "mops/protocol.hpp"
#include "mops/rng.hpp"

using namespace mops;

namespace {

std::vector<uint8_t> load_golden(const std::string& name) {
    std::ifstream in(std::string(MOPS_TEST_DIR) + "/golden/" + name + ".hex");
    REQUIRE(in.good());
    std::string hex;
    in >> hex;
    REQUIRE(hex.size() % 2 == 0);
    std::vector<uint8_t> bytes;
    for (size_t i = 0; i < hex.size(); i += 2)
        bytes.push_back(static_cast<uint8_t>(std::stoul(hex.substr(i, 2), nullptr, 16)));
    return bytes;
}

RoundMessage fuzz_message(Rng& rng) {
    uint16_t agent = static_cast<uint16_t>(rng.uniform_index(64));
    uint32_t round = static_cast<uint32_t>(rng.uniform_index(100000));
    auto rand_vec = [&](size_t max_len) {
        Vec v(rng.uniform_index(max_len + 1));
        for (auto& x : v) x = rng.uniform(-1e6, 1e6);
        return v;
    };
    switch (rng.uniform_index(4)) {
        case 0: {
            EmbeddingRecord e{agent, round, static_cast<SampleTag>(rng.uniform_index(3)),
                              rand_vec(40), rand_vec(10)};
            return e;
        }
        case 1:
            return GradientRecord{agent, round, rand_vec(40)};
        case 2:
            return WeightsRecord{agent, round, rand_vec(8)};
        default:
            return ControlRecord{agent, round, static_cast<uint8_t>(rng.uniform_index(2)),
                                 rand_vec(4)};
    }
}

bool equal(const RoundMessage& a, const RoundMessage& b) {
    if (a.index() != b.index()) return false;
    if (const auto* e = std::get_if<EmbeddingRecord>(&a)) {
        const auto& f = std::get<EmbeddingRecord>(b);
        return e->agent_id == f.agent_id && e->round == f.round && e->tag == f.tag && e->z == f.z &&
               e->y == f.y;
    }
    if (const auto* g = std::get_if<GradientRecord>(&a)) {
        const auto& h = std::get<GradientRecord>(b);
        return g->agent_id == h.agent_id && g->round == h.round && g->g_boundary == h.g_boundary;
    }
    if (const auto* w = std::get_if<WeightsRecord>(&a)) {
        const auto& x = std::get<WeightsRecord>(b);
        return w->agent_id == x.agent_id && w->round == x.round && w->weights == x.weights;
    }
    const auto& c = std::get<ControlRecord>(a);
    const auto& d = std::get<ControlRecord>(b);
    return c.agent_id == d.agent_id && c.round == d.round && c.code == d.code && c.aux == d.aux;
}

}  // namespace

TEST_CASE("golden byte vectors are bit-exact") {
    CHECK(encode(GradientRecord{1, 0, {1.0}}) == load_golden("grad_a1_r0"));
    CHECK(encode(EmbeddingRecord{2, 7, SampleTag::primary, {0.5, -0.25}, {1.0, 2.0, 3.0}}) ==
          load_golden("emb_a2_r7_primary"));
    CHECK(encode(EmbeddingRecord{0, 1, SampleTag::extra2, {-1.5}, {}}) ==
          load_golden("emb_a0_r1_extra2_emptyy"));
    CHECK(encode(WeightsRecord{3, 12, {0.25, 0.75}}) == load_golden("weights_a3_r12"));
    CHECK(encode(ControlRecord{5, 0, 0, {1000.0}}) == load_golden("control_a5_r0_start"));

    // decode side of the fixtures
    for (const char* name : {"grad_a1_r0", "emb_a2_r7_primary", "weights_a3_r12"}) {
        auto bytes = load_golden(name);
        auto msg = decode(bytes);
        CHECK(encode(msg) == bytes);
    }
}

TEST_CASE("analytic message sizes match encoded lengths") {
    CHECK(encode(GradientRecord{1, 0, {1.0}}).size() == gradient_message_bytes(1));
    CHECK(encode(EmbeddingRecord{2, 7, SampleTag::primary, {0.5, -0.25}, {1.0, 2.0, 3.0}}).size() ==
          embedding_message_bytes(2, 3));
    CHECK(encode(WeightsRecord{3, 12, {0.25, 0.75}}).size() == weights_message_bytes(2));
    CHECK(encode(ControlRecord{5, 0, 0, {1000.0}}).size() == control_message_bytes(1));
}

TEST_CASE("fuzzed encode/decode round trip") {
    Rng rng(2024, 1);
    for (int it = 0; it < 10000; ++it) {
        RoundMessage msg = fuzz_message(rng);
        auto bytes = encode(msg);
        RoundMessage back = decode(bytes);
        REQUIRE(equal(msg, back));
    }
}

TEST_CASE("decode rejects malformed frames") {
    auto good = encode(GradientRecord{1, 3, {1.0, 2.0}});

    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode(bad_magic), ProtocolError);

    auto bad_version = good;
    bad_version[4] = 9;
    CHECK_THROWS_AS(decode(bad_version), ProtocolError);

    auto bad_type = good;
    bad_type[5] = 0x55;
    CHECK_THROWS_AS(decode(bad_type), ProtocolError);

    auto truncated = good;
    truncated.pop_back();
    CHECK_THROWS_AS(decode(truncated), ProtocolError);

    auto off_by_one = good;
    off_by_one[12] = static_cast<uint8_t>(off_by_one[12] + 1);  // payload_len + 1
    CHECK_THROWS_AS(decode(off_by_one), ProtocolError);

    auto trailing = good;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode(trailing), ProtocolError);

    // inner vector length exceeding the payload
    auto overrun = good;
    overrun[16] = 0xff;
    CHECK_THROWS_AS(decode(overrun), ProtocolError);

    auto nan_payload = encode(GradientRecord{1, 3, {1.0}});
    for (int k = 0; k < 8; ++k) nan_payload[20 + k] = 0xff;  // quiet NaN
    CHECK_THROWS_AS(decode(nan_payload), NumericError);

    CHECK_THROWS_AS(decode(std::vector<uint8_t>{'M', 'O'}), ProtocolError);
}

TEST_CASE("loopback transport is FIFO and byte-faithful") {
    Transport net;
    net.register_endpoint("a");
    net.register_endpoint("b");

    auto m1 = encode(GradientRecord{0, 0, {1.0}});
    auto m2 = encode(GradientRecord{0, 1, {2.0}});
    net.send("a", "b", m1);
    net.send("a", "b", m2);
    CHECK(net.recv("b") == m1);
    CHECK(net.recv("b") == m2);
    CHECK(net.bytes_sent_by("a") == m1.size() + m2.size());
    CHECK(net.bytes_sent_by("b") == 0);

    CHECK_THROWS_AS(net.send("a", "nowhere", m1), std::invalid_argument);
}

TEST_CASE("transport recv blocks until a message arrives") {
    Transport net;
    net.register_endpoint("a");
    net.register_endpoint("b");
    auto payload = encode(ControlRecord{0, 0, 0, {}});

    std::vector<uint8_t> got;
    std::thread consumer([&] { got = net.recv("b"); });
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    net.send("a", "b", payload);
    consumer.join();
    CHECK(got == payload);

    net.close("b");
    CHECK_THROWS_AS(net.recv("b"), ChannelClosed);
}
