#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <map>

#include "dflmoe/netsim.hpp"
#include "dflmoe/serialize.hpp"
#include "oracles.hpp"

using namespace dflmoe;

namespace {

Head make_head(int owner, int version, std::size_t d, std::size_t classes, std::uint64_t seed) {
    Rng rng(seed);
    Head head;
    head.weight = oracle::random_tensor({d, classes}, rng);
    head.bias = oracle::random_tensor({classes}, rng);
    head.owner_id = owner;
    head.version = version;
    return head;
}

std::map<int, HeadPacket> packets_for(const std::vector<int>& ids, int version = 0) {
    std::map<int, HeadPacket> packets;
    for (int id : ids) {
        packets.emplace(id, make_head_packet(make_head(id, version, 4, 3, 50 + id)));
    }
    return packets;
}

/// Independent replay of the documented draw order: ascending (from, to)
/// pairs, one uniform draw per attempt, delivered iff draw >= rate and the
/// link is not severed.
std::vector<bool> replay_schedule(const FaultPlan& plan, const std::vector<int>& ids,
                                  std::size_t rounds) {
    Rng rng(plan.seed);
    std::vector<bool> delivered;
    for (std::size_t r = 0; r < rounds; ++r) {
        for (int from : ids) {
            for (int to : ids) {
                if (to == from) continue;
                double u = rng.uniform();
                delivered.push_back(u >= plan.link_drop_rate && !plan.severed_links.count({from, to}));
            }
        }
    }
    return delivered;
}

}  // namespace

TEST_CASE("head packets round-trip bit-exactly and pass the audit") {
    Head head = make_head(3, 7, 5, 4, 123);
    HeadPacket pkt = make_head_packet(head);
    CHECK(pkt.origin_id == 3);
    CHECK(pkt.version == 7);
    CHECK(pkt.size_params == 5 * 4 + 4);
    audit_head_packet(pkt);

    Head back = open_head_packet(pkt);
    CHECK(back.owner_id == 3);
    CHECK(back.version == 7);
    REQUIRE(back.weight.shape() == head.weight.shape());
    CHECK(std::memcmp(back.weight.values().data(), head.weight.values().data(),
                      head.weight.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(back.bias.values().data(), head.bias.values().data(),
                      head.bias.size() * sizeof(double)) == 0);
}

TEST_CASE("audit rejects payloads that are not exactly a head") {
    // three tensors in the payload: looks like a feature batch snuck in
    Head head = make_head(0, 0, 4, 3, 9);
    HeadPacket pkt = make_head_packet(head);
    Rng rng(10);
    write_tensor(pkt.payload, oracle::random_tensor({8, 4}, rng));
    CHECK_THROWS_AS(audit_head_packet(pkt), Error);

    HeadPacket lying = make_head_packet(head);
    lying.size_params = 1;
    CHECK_THROWS_AS(audit_head_packet(lying), Error);
}

TEST_CASE("four clients with no faults deliver N(N-1) = 12 packets") {
    FaultPlan plan{.link_drop_rate = 0.0, .seed = 1};
    NetSim net(plan);
    auto report = net.broadcast_heads(packets_for({0, 1, 2, 3}), 0);
    CHECK(report.attempts.size() == 12);
    CHECK(report.delivered_count() == 12);
    CHECK(net.ledger().cumulative.packets_sent == 12);
    CHECK(net.ledger().cumulative.packets_delivered == 12);
    CHECK(net.ledger().cumulative.packets_dropped == 0);
}

TEST_CASE("drop rate one sends twelve and delivers none") {
    FaultPlan plan{.link_drop_rate = 1.0, .seed = 1};
    NetSim net(plan);
    auto report = net.broadcast_heads(packets_for({0, 1, 2, 3}), 0);
    CHECK(report.attempts.size() == 12);
    CHECK(report.delivered_count() == 0);
    CHECK(net.ledger().cumulative.packets_dropped == 12);
}

TEST_CASE("delivery schedule matches the independent rng replay") {
    FaultPlan plan{.link_drop_rate = 0.5, .seed = 11};
    NetSim net(plan);
    std::vector<int> ids = {0, 1, 2, 3};
    std::vector<bool> actual;
    for (std::size_t round = 0; round < 5; ++round) {
        auto report = net.broadcast_heads(packets_for(ids, static_cast<int>(round)), round);
        for (const auto& d : report.attempts) actual.push_back(d.delivered);
    }
    CHECK(actual == replay_schedule(plan, ids, 5));
}

TEST_CASE("identical plans give identical schedules across instances") {
    FaultPlan plan{.link_drop_rate = 0.3, .seed = 77};
    NetSim a(plan), b(plan);
    for (std::size_t round = 0; round < 3; ++round) {
        auto ra = a.broadcast_heads(packets_for({0, 1, 2}), round);
        auto rb = b.broadcast_heads(packets_for({0, 1, 2}), round);
        REQUIRE(ra.attempts.size() == rb.attempts.size());
        for (std::size_t i = 0; i < ra.attempts.size(); ++i) {
            CHECK(ra.attempts[i].delivered == rb.attempts[i].delivered);
        }
    }
}

TEST_CASE("empirical delivery fraction tracks one minus the rate") {
    FaultPlan plan{.link_drop_rate = 0.3, .seed = 4242};
    NetSim net(plan);
    std::vector<int> ids = {0, 1, 2, 3};
    std::size_t rounds = 900;  // 12 links x 900 rounds > 10^4 link-rounds
    for (std::size_t round = 0; round < rounds; ++round) {
        net.broadcast_heads(packets_for(ids), round);
    }
    const auto& totals = net.ledger().cumulative;
    double fraction = static_cast<double>(totals.packets_delivered) /
                      static_cast<double>(totals.packets_sent);
    CHECK(std::abs(fraction - 0.7) < 0.02);
    CHECK(totals.packets_delivered + totals.packets_dropped == totals.packets_sent);
}

TEST_CASE("ledger conserves per round and cumulatively") {
    FaultPlan plan{.link_drop_rate = 0.4, .seed = 8};
    NetSim net(plan);
    for (std::size_t round = 0; round < 6; ++round) net.broadcast_heads(packets_for({0, 1, 2}), round);
    std::uint64_t sent = 0, delivered = 0, dropped = 0;
    for (const auto& counters : net.ledger().per_round) {
        CHECK(counters.packets_delivered + counters.packets_dropped == counters.packets_sent);
        sent += counters.packets_sent;
        delivered += counters.packets_delivered;
        dropped += counters.packets_dropped;
    }
    CHECK(sent == net.ledger().cumulative.packets_sent);
    CHECK(delivered == net.ledger().cumulative.packets_delivered);
    CHECK(dropped == net.ledger().cumulative.packets_dropped);
}

TEST_CASE("client disconnect filters ids and guards against removing everyone") {
    FaultPlan plan;
    plan.removed_clients = {1};
    auto active = apply_client_disconnect(plan, {0, 1, 2, 3});
    CHECK(active == std::vector<int>{0, 2, 3});

    FaultPlan none;
    CHECK(apply_client_disconnect(none, {0, 1}) == std::vector<int>{0, 1});

    FaultPlan all;
    all.removed_clients = {0, 1};
    CHECK_THROWS_AS(apply_client_disconnect(all, {0, 1}), Error);
    try {
        apply_client_disconnect(all, {0, 1});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RemovingAllClients);
    }
}

TEST_CASE("three active clients attempt six packets per round") {
    FaultPlan plan{.link_drop_rate = 0.0, .seed = 3};
    plan.removed_clients = {3};
    NetSim net(plan);
    auto active = apply_client_disconnect(plan, {0, 1, 2, 3});
    auto report = net.broadcast_heads(packets_for(active), 0);
    CHECK(report.attempts.size() == 6);
}

TEST_CASE("removing two of four matches a fresh two-client run") {
    FaultPlan removed_plan{.link_drop_rate = 0.5, .seed = 31};
    removed_plan.removed_clients = {2, 3};
    NetSim with_removed(removed_plan);
    auto active = apply_client_disconnect(removed_plan, {0, 1, 2, 3});

    FaultPlan fresh_plan{.link_drop_rate = 0.5, .seed = 31};
    NetSim fresh(fresh_plan);

    for (std::size_t round = 0; round < 10; ++round) {
        auto a = with_removed.broadcast_heads(packets_for(active), round);
        auto b = fresh.broadcast_heads(packets_for({0, 1}), round);
        REQUIRE(a.attempts.size() == b.attempts.size());
        for (std::size_t i = 0; i < a.attempts.size(); ++i) {
            CHECK(a.attempts[i].from == b.attempts[i].from);
            CHECK(a.attempts[i].to == b.attempts[i].to);
            CHECK(a.attempts[i].delivered == b.attempts[i].delivered);
        }
    }
}

TEST_CASE("severed links consume a draw but never deliver") {
    FaultPlan plan{.link_drop_rate = 0.0, .seed = 5};
    plan.severed_links = {{0, 1}};
    NetSim net(plan);
    auto report = net.broadcast_heads(packets_for({0, 1, 2}), 0);
    for (const auto& d : report.attempts) {
        if (d.from == 0 && d.to == 1) {
            CHECK_FALSE(d.delivered);
        } else {
            CHECK(d.delivered);
        }
    }
    auto expect = replay_schedule(plan, {0, 1, 2}, 1);
    REQUIRE(report.attempts.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(report.attempts[i].delivered == expect[i]);
}

TEST_CASE("relay skips the receiver's and sender's own heads and counts separately") {
    FaultPlan plan{.link_drop_rate = 0.0, .seed = 6};
    NetSim net(plan);
    // client 1 knows heads of 0 and 2; client 0 and 2 know nothing
    std::map<int, std::vector<HeadPacket>> known;
    known[0] = {};
    known[1] = {make_head_packet(make_head(0, 0, 4, 3, 70)), make_head_packet(make_head(2, 0, 4, 3, 72))};
    known[2] = {};
    auto report = net.relay_forward(known, 0);
    // 1 -> 0 can carry only head 2; 1 -> 2 can carry only head 0
    REQUIRE(report.attempts.size() == 2);
    CHECK(report.attempts[0].from == 1);
    CHECK(report.attempts[0].to == 0);
    CHECK(report.attempts[0].origin == 2);
    CHECK(report.attempts[1].from == 1);
    CHECK(report.attempts[1].to == 2);
    CHECK(report.attempts[1].origin == 0);
    CHECK(net.ledger().cumulative.relay_packets_sent == 2);
    CHECK(net.ledger().cumulative.packets_sent == 0);
}

TEST_CASE("comm report arithmetic") {
    // head 68 params, body 20000 params -> full model 20068
    Rng rng(21);
    ClientModel model = make_client_model({.input_dim = 1232, .hidden_dims = {16}, .feature_dim = 16},
                                          4, 16, 0, rng);
    CHECK(param_count(model, ParamGroup::Head) == 68);
    CHECK(param_count(model, ParamGroup::Body) == 20000);
    CommReport report = comm_report({&model}, {0});
    CHECK(report.ratios[0] == doctest::Approx(68.0 / 20068.0).epsilon(1e-12));
    CHECK(report.mean_ratio == report.ratios[0]);

    // homogeneous clients: the mean ratio equals every per-client ratio
    Rng rng2(22);
    ClientModel m1 = make_client_model({.input_dim = 8, .hidden_dims = {12}, .feature_dim = 8}, 3, 8, 0, rng2);
    ClientModel m2 = make_client_model({.input_dim = 8, .hidden_dims = {12}, .feature_dim = 8}, 3, 8, 1, rng2);
    CommReport homo = comm_report({&m1, &m2}, {0, 1});
    CHECK(homo.mean_ratio == doctest::Approx(homo.ratios[0]).epsilon(1e-15));
    CHECK(homo.ratios[0] == doctest::Approx(homo.ratios[1]).epsilon(1e-15));

    // heterogeneous desk-scale config keeps the ratio under 5%
    Rng rng3(23);
    std::vector<ClientModel> models;
    std::vector<const ClientModel*> ptrs;
    std::vector<BodySpec> specs = {
        {.input_dim = 32, .hidden_dims = {64}, .feature_dim = 32},
        {.input_dim = 32, .hidden_dims = {48}, .feature_dim = 24},
        {.input_dim = 32, .hidden_dims = {80}, .feature_dim = 40},
        {.input_dim = 32, .hidden_dims = {64, 32}, .feature_dim = 32},
    };
    for (std::size_t i = 0; i < specs.size(); ++i) {
        models.push_back(make_client_model(specs[i], 4, 40, static_cast<int>(i), rng3));
    }
    for (const auto& m : models) ptrs.push_back(&m);
    CommReport hetero = comm_report(ptrs, {0, 1, 2, 3});
    CHECK(hetero.mean_ratio < 0.05);
    for (double r : hetero.ratios) CHECK(r < 0.05);
}
