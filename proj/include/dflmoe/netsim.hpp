#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "dflmoe/model.hpp"
#include "dflmoe/rng.hpp"

namespace dflmoe {

/// Serialized head in flight. Payload layout: magic "DFLH", u32 format
/// version, u32 origin_id, u32 head version, then the weight and bias
/// tensors in the binary tensor layout.
struct HeadPacket {
    int origin_id = -1;
    int version = -1;
    std::vector<std::uint8_t> payload;

    std::size_t size_bytes() const { return payload.size(); }
    std::size_t size_params = 0;
};

HeadPacket make_head_packet(const Head& head);
Head open_head_packet(const HeadPacket& packet);

/// Checks the privacy contract: a packet carries exactly the two head
/// tensors ([d x C] weight, [C] bias) and nothing shaped like a feature
/// batch or label vector. Throws on violation.
void audit_head_packet(const HeadPacket& packet);

struct FaultPlan {
    double link_drop_rate = 0.0;                    // per directed link per round
    std::set<std::pair<int, int>> severed_links;    // always-down directed links
    std::set<int> removed_clients;                  // excluded from every phase
    std::uint64_t seed = 0;                         // dedicated fault stream
};

/// Per-round and cumulative traffic counters. Relay traffic is tracked
/// separately from the direct exchange.
struct CommLedger {
    struct Counters {
        std::uint64_t packets_sent = 0;
        std::uint64_t packets_delivered = 0;
        std::uint64_t packets_dropped = 0;
        std::uint64_t bytes_sent = 0;
        std::uint64_t params_sent = 0;
        std::uint64_t relay_packets_sent = 0;
        std::uint64_t relay_packets_delivered = 0;
        std::uint64_t relay_packets_dropped = 0;
        std::uint64_t relay_bytes_sent = 0;
        std::uint64_t relay_params_sent = 0;
    };
    std::vector<Counters> per_round;
    Counters cumulative;

    Counters& round(std::size_t r);
};

struct Delivery {
    int from = -1;
    int to = -1;
    int origin = -1;  // head owner (== from for direct sends)
    int version = -1;
    bool delivered = false;
    bool relayed = false;
    std::size_t bytes = 0;
    std::size_t params = 0;
};

struct DeliveryReport {
    std::vector<Delivery> attempts;
    std::size_t delivered_count() const;
};

/// Removed clients stripped from `client_ids`; RemovingAllClients when
/// nothing survives.
std::vector<int> apply_client_disconnect(const FaultPlan& plan, const std::vector<int>& client_ids);

/// Deterministic message layer. One uniform draw is consumed per packet
/// attempt in a fixed order: direct broadcasts iterate (sender, receiver)
/// pairs lexicographically over the active ids; relay iterates (sender,
/// receiver, origin) the same way. A draw is consumed even on severed
/// links so fault schedules are invariant to the topology overrides.
class NetSim {
  public:
    explicit NetSim(const FaultPlan& plan);

    const FaultPlan& plan() const { return plan_; }
    CommLedger& ledger() { return ledger_; }
    const CommLedger& ledger() const { return ledger_; }

    /// Every sender attempts one packet to every other active client.
    DeliveryReport broadcast_heads(const std::map<int, HeadPacket>& packets, std::size_t round);

    /// One extra hop: each client re-broadcasts every head it knows that
    /// is neither its own nor the receiver's. Callers pass the registry
    /// snapshot taken before this round's direct deliveries.
    DeliveryReport relay_forward(const std::map<int, std::vector<HeadPacket>>& known_heads,
                                 std::size_t round);

  private:
    bool attempt(int from, int to);

    FaultPlan plan_;
    Rng fault_rng_;
    CommLedger ledger_;
};

/// Table-8-style accounting: parameters a client ships per packet (its
/// head) against the hypothetical full local network (body + head).
struct CommReport {
    std::vector<int> client_ids;
    std::vector<std::size_t> head_params;
    std::vector<std::size_t> full_model_params;
    std::vector<double> ratios;  // head / full, per client
    double mean_ratio = 0.0;
};

CommReport comm_report(const std::vector<const ClientModel*>& models, const std::vector<int>& ids);

}  // namespace dflmoe
