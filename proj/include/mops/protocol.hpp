#pragma once

#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <variant>

#include "mops/common.hpp"

namespace mops {

// Wire format, stable and bit-exact:
//   "MOPS" | version u8=1 | msg_type u8 | agent_id u16 LE | round u32 LE |
//   payload_len u32 LE | payload
// All reals are little-endian IEEE-754 binary64; vectors carry a u32 count.
enum class MsgType : uint8_t {
    embedding = 0x01,
    gradient = 0x02,
    weights = 0x03,
    control = 0x04,
};

enum class SampleTag : uint8_t { primary = 0, extra1 = 1, extra2 = 2 };

struct EmbeddingRecord {
    uint16_t agent_id = 0;
    uint32_t round = 0;
    SampleTag tag = SampleTag::primary;
    Vec z;
    Vec y;
};

struct GradientRecord {
    uint16_t agent_id = 0;
    uint32_t round = 0;
    Vec g_boundary;
};

struct WeightsRecord {
    uint16_t agent_id = 0;
    uint32_t round = 0;
    Vec weights;
};

struct ControlRecord {
    uint16_t agent_id = 0;
    uint32_t round = 0;
    uint8_t code = 0;  // 0 = session start, 1 = session end
    Vec aux;
};

using RoundMessage = std::variant<EmbeddingRecord, GradientRecord, WeightsRecord, ControlRecord>;

inline constexpr size_t kHeaderBytes = 16;
inline constexpr uint8_t kProtocolVersion = 1;

// Analytic message sizes, the basis of the communication accounting.
inline size_t embedding_message_bytes(size_t z_dim, size_t y_dim) {
    return kHeaderBytes + 1 + 4 + 8 * z_dim + 4 + 8 * y_dim;
}
inline size_t gradient_message_bytes(size_t g_dim) { return kHeaderBytes + 4 + 8 * g_dim; }
inline size_t weights_message_bytes(size_t n) { return kHeaderBytes + 4 + 8 * n; }
inline size_t control_message_bytes(size_t aux_dim) { return kHeaderBytes + 1 + 4 + 8 * aux_dim; }

namespace detail {

inline void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v & 0xff));
    b.push_back(static_cast<uint8_t>(v >> 8));
}
inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::vector<uint8_t>& b, double x) {
    uint64_t v;
    static_assert(sizeof(v) == sizeof(x));
    std::memcpy(&v, &x, 8);
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
inline void put_vec(std::vector<uint8_t>& b, const Vec& v) {
    if (v.size() > 0xffffffffull) throw std::invalid_argument("encode: vector too long");
    put_u32(b, static_cast<uint32_t>(v.size()));
    for (double x : v) put_f64(b, x);
}

struct Reader {
    const uint8_t* p;
    size_t n;
    size_t pos = 0;

    void need(size_t k) const {
        if (pos + k > n) throw ProtocolError("decode: truncated message");
    }
    uint8_t u8() {
        need(1);
        return p[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        double x;
        std::memcpy(&x, &v, 8);
        return x;
    }
    Vec vec() {
        uint32_t len = u32();
        need(static_cast<size_t>(len) * 8);
        Vec v(len);
        for (uint32_t i = 0; i < len; ++i) v[i] = f64();
        if (!all_finite(v)) throw NumericError("decode: non-finite payload value");
        return v;
    }
};

}  // namespace detail

inline std::vector<uint8_t> encode(const RoundMessage& msg) {
    std::vector<uint8_t> payload;
    MsgType type;
    uint16_t agent_id;
    uint32_t round;
    if (const auto* e = std::get_if<EmbeddingRecord>(&msg)) {
        type = MsgType::embedding;
        agent_id = e->agent_id;
        round = e->round;
        payload.push_back(static_cast<uint8_t>(e->tag));
        detail::put_vec(payload, e->z);
        detail::put_vec(payload, e->y);
    } else if (const auto* g = std::get_if<GradientRecord>(&msg)) {
        type = MsgType::gradient;
        agent_id = g->agent_id;
        round = g->round;
        detail::put_vec(payload, g->g_boundary);
    } else if (const auto* w = std::get_if<WeightsRecord>(&msg)) {
        type = MsgType::weights;
        agent_id = w->agent_id;
        round = w->round;
        detail::put_vec(payload, w->weights);
    } else {
        const auto& c = std::get<ControlRecord>(msg);
        type = MsgType::control;
        agent_id = c.agent_id;
        round = c.round;
        payload.push_back(c.code);
        detail::put_vec(payload, c.aux);
    }

    std::vector<uint8_t> out;
    out.reserve(kHeaderBytes + payload.size());
    for (char c : {'M', 'O', 'P', 'S'}) out.push_back(static_cast<uint8_t>(c));
    out.push_back(kProtocolVersion);
    out.push_back(static_cast<uint8_t>(type));
    detail::put_u16(out, agent_id);
    detail::put_u32(out, round);
    detail::put_u32(out, static_cast<uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

inline RoundMessage decode(const std::vector<uint8_t>& bytes) {
    detail::Reader r{bytes.data(), bytes.size()};
    r.need(kHeaderBytes);
    if (std::memcmp(bytes.data(), "MOPS", 4) != 0) throw ProtocolError("decode: bad magic");
    r.pos = 4;
    if (r.u8() != kProtocolVersion) throw ProtocolError("decode: unsupported version");
    uint8_t type = r.u8();
    uint16_t agent_id = r.u16();
    uint32_t round = r.u32();
    uint32_t payload_len = r.u32();
    if (bytes.size() != kHeaderBytes + payload_len)
        throw ProtocolError("decode: payload length mismatch");

    RoundMessage msg;
    switch (type) {
        case 0x01: {
            EmbeddingRecord e;
            e.agent_id = agent_id;
            e.round = round;
            uint8_t tag = r.u8();
            if (tag > 2) throw ProtocolError("decode: bad sample tag");
            e.tag = static_cast<SampleTag>(tag);
            e.z = r.vec();
            e.y = r.vec();
            msg = std::move(e);
            break;
        }
        case 0x02: {
            GradientRecord g;
            g.agent_id = agent_id;
            g.round = round;
            g.g_boundary = r.vec();
            msg = std::move(g);
            break;
        }
        case 0x03: {
            WeightsRecord w;
            w.agent_id = agent_id;
            w.round = round;
            w.weights = r.vec();
            msg = std::move(w);
            break;
        }
        case 0x04: {
            ControlRecord c;
            c.agent_id = agent_id;
            c.round = round;
            c.code = r.u8();
            c.aux = r.vec();
            msg = std::move(c);
            break;
        }
        default:
            throw ProtocolError("decode: unknown message type");
    }
    if (r.pos != bytes.size()) throw ProtocolError("decode: trailing bytes in payload");
    return msg;
}

// Reliable, in-order, loss-free loopback transport. One FIFO mailbox per
// endpoint keeps per-(sender, receiver) order; recv blocks until a message
// arrives or the endpoint is closed.
class Transport {
  public:
    void register_endpoint(const std::string& name) {
        std::lock_guard lk(reg_mu_);
        if (boxes_.count(name)) throw std::invalid_argument("Transport: endpoint exists");
        boxes_.emplace(name, std::make_unique<Mailbox>());
    }

    void send(const std::string& from, const std::string& to, std::vector<uint8_t> bytes) {
        Mailbox& src = box(from);
        Mailbox& dst = box(to);
        {
            std::lock_guard lk(src.mu);
            src.sent_bytes += bytes.size();
        }
        {
            std::lock_guard lk(dst.mu);
            if (dst.closed) throw ChannelClosed("Transport: send to closed endpoint");
            dst.queue.push_back(std::move(bytes));
        }
        dst.cv.notify_all();
    }

    std::vector<uint8_t> recv(const std::string& endpoint) {
        Mailbox& mb = box(endpoint);
        std::unique_lock lk(mb.mu);
        mb.cv.wait(lk, [&] { return !mb.queue.empty() || mb.closed; });
        if (mb.queue.empty()) throw ChannelClosed("Transport: recv on closed endpoint");
        auto bytes = std::move(mb.queue.front());
        mb.queue.pop_front();
        return bytes;
    }

    void close(const std::string& endpoint) {
        Mailbox& mb = box(endpoint);
        {
            std::lock_guard lk(mb.mu);
            mb.closed = true;
        }
        mb.cv.notify_all();
    }

    void close_all() {
        std::lock_guard lk(reg_mu_);
        for (auto& [name, mb] : boxes_) {
            {
                std::lock_guard l2(mb->mu);
                mb->closed = true;
            }
            mb->cv.notify_all();
        }
    }

    uint64_t bytes_sent_by(const std::string& endpoint) {
        Mailbox& mb = box(endpoint);
        std::lock_guard lk(mb.mu);
        return mb.sent_bytes;
    }

  private:
    struct Mailbox {
        std::mutex mu;
        std::condition_variable cv;
        std::deque<std::vector<uint8_t>> queue;
        bool closed = false;
        uint64_t sent_bytes = 0;
    };

    Mailbox& box(const std::string& name) {
        std::lock_guard lk(reg_mu_);
        auto it = boxes_.find(name);
        if (it == boxes_.end()) throw std::invalid_argument("Transport: unknown endpoint " + name);
        return *it->second;
    }

    std::mutex reg_mu_;
    std::map<std::string, std::unique_ptr<Mailbox>> boxes_;
};

}  // namespace mops
