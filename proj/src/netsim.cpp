#include "dflmoe/netsim.hpp"

#include <algorithm>

#include "dflmoe/serialize.hpp"

namespace dflmoe {

namespace {

constexpr std::uint32_t kPacketMagic = 0x484C4644;  // "DFLH" little-endian
constexpr std::uint32_t kPacketFormat = 1;

}  // namespace

HeadPacket make_head_packet(const Head& head) {
    HeadPacket pkt;
    pkt.origin_id = head.owner_id;
    pkt.version = head.version;
    write_u32(pkt.payload, kPacketMagic);
    write_u32(pkt.payload, kPacketFormat);
    write_u32(pkt.payload, static_cast<std::uint32_t>(head.owner_id));
    write_u32(pkt.payload, static_cast<std::uint32_t>(head.version));
    write_tensor(pkt.payload, head.weight);
    write_tensor(pkt.payload, head.bias);
    pkt.size_params = head.weight.size() + head.bias.size();
    return pkt;
}

Head open_head_packet(const HeadPacket& packet) {
    std::size_t offset = 0;
    if (read_u32(packet.payload, offset) != kPacketMagic) {
        throw Error(ErrorCode::ParseError, "bad packet magic");
    }
    if (read_u32(packet.payload, offset) != kPacketFormat) {
        throw Error(ErrorCode::ParseError, "unsupported packet format");
    }
    Head head;
    head.owner_id = static_cast<int>(read_u32(packet.payload, offset));
    head.version = static_cast<int>(read_u32(packet.payload, offset));
    head.weight = read_tensor(packet.payload, offset);
    head.bias = read_tensor(packet.payload, offset);
    if (offset != packet.payload.size()) {
        throw Error(ErrorCode::ParseError, "trailing bytes in head packet");
    }
    return head;
}

void audit_head_packet(const HeadPacket& packet) {
    Head head = open_head_packet(packet);
    if (head.weight.rank() != 2 || head.bias.rank() != 1 ||
        head.weight.cols() != head.bias.shape()[0]) {
        throw Error(ErrorCode::ParseError, "packet tensors are not head-shaped");
    }
    if (packet.size_params != head.weight.size() + head.bias.size()) {
        throw Error(ErrorCode::ParseError, "declared parameter count disagrees with payload");
    }
}

CommLedger::Counters& CommLedger::round(std::size_t r) {
    if (per_round.size() <= r) per_round.resize(r + 1);
    return per_round[r];
}

std::size_t DeliveryReport::delivered_count() const {
    std::size_t n = 0;
    for (const auto& a : attempts) n += a.delivered;
    return n;
}

std::vector<int> apply_client_disconnect(const FaultPlan& plan, const std::vector<int>& client_ids) {
    std::vector<int> active;
    for (int id : client_ids) {
        if (!plan.removed_clients.count(id)) active.push_back(id);
    }
    if (active.empty()) {
        throw Error(ErrorCode::RemovingAllClients, "fault plan removes every client");
    }
    std::sort(active.begin(), active.end());
    return active;
}

NetSim::NetSim(const FaultPlan& plan) : plan_(plan), fault_rng_(plan.seed) {
    if (plan.link_drop_rate < 0.0 || plan.link_drop_rate > 1.0) {
        throw Error(ErrorCode::InvalidParams, "link_drop_rate must be in [0, 1]");
    }
}

bool NetSim::attempt(int from, int to) {
    // One draw per attempt, severed or not, so the stream stays aligned
    // across topologies.
    double u = fault_rng_.uniform();
    if (plan_.severed_links.count({from, to})) return false;
    return u >= plan_.link_drop_rate;
}

DeliveryReport NetSim::broadcast_heads(const std::map<int, HeadPacket>& packets, std::size_t round) {
    DeliveryReport report;
    auto tally = [&](CommLedger::Counters& c, const Delivery& d) {
        c.packets_sent += 1;
        c.bytes_sent += d.bytes;
        c.params_sent += d.params;
        if (d.delivered) {
            c.packets_delivered += 1;
        } else {
            c.packets_dropped += 1;
        }
    };
    for (const auto& [from, pkt] : packets) {
        for (const auto& [to, unused] : packets) {
            if (to == from) continue;
            Delivery d;
            d.from = from;
            d.to = to;
            d.origin = pkt.origin_id;
            d.version = pkt.version;
            d.bytes = pkt.size_bytes();
            d.params = pkt.size_params;
            d.delivered = attempt(from, to);
            tally(ledger_.round(round), d);
            tally(ledger_.cumulative, d);
            report.attempts.push_back(d);
        }
    }
    return report;
}

DeliveryReport NetSim::relay_forward(const std::map<int, std::vector<HeadPacket>>& known_heads,
                                     std::size_t round) {
    DeliveryReport report;
    auto tally = [&](CommLedger::Counters& c, const Delivery& d) {
        c.relay_packets_sent += 1;
        c.relay_bytes_sent += d.bytes;
        c.relay_params_sent += d.params;
        if (d.delivered) {
            c.relay_packets_delivered += 1;
        } else {
            c.relay_packets_dropped += 1;
        }
    };
    for (const auto& [from, heads] : known_heads) {
        for (const auto& [to, unused] : known_heads) {
            if (to == from) continue;
            for (const auto& pkt : heads) {
                if (pkt.origin_id == to || pkt.origin_id == from) continue;
                Delivery d;
                d.from = from;
                d.to = to;
                d.origin = pkt.origin_id;
                d.version = pkt.version;
                d.relayed = true;
                d.bytes = pkt.size_bytes();
                d.params = pkt.size_params;
                d.delivered = attempt(from, to);
                tally(ledger_.round(round), d);
                tally(ledger_.cumulative, d);
                report.attempts.push_back(d);
            }
        }
    }
    return report;
}

CommReport comm_report(const std::vector<const ClientModel*>& models, const std::vector<int>& ids) {
    if (models.size() != ids.size()) throw Error(ErrorCode::LengthMismatch, "model/id counts disagree");
    CommReport report;
    report.client_ids = ids;
    double total_ratio = 0.0;
    for (const ClientModel* m : models) {
        std::size_t head = param_count(*m, ParamGroup::Head);
        std::size_t full = head + param_count(*m, ParamGroup::Body);
        report.head_params.push_back(head);
        report.full_model_params.push_back(full);
        double ratio = static_cast<double>(head) / static_cast<double>(full);
        report.ratios.push_back(ratio);
        total_ratio += ratio;
    }
    report.mean_ratio = models.empty() ? 0.0 : total_ratio / static_cast<double>(models.size());
    return report;
}

}  // namespace dflmoe
