#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>
#include <sstream>

#include "odxu/payload.hpp"
#include "packet_builder.hpp"

using namespace odxu;
using testutil::FrameSpec;
using testutil::RecordSpec;

namespace {

std::istringstream stream_of(const std::vector<std::uint8_t>& bytes) {
    return std::istringstream(testutil::to_string_bytes(bytes));
}

PayloadDataset make_dataset(const std::vector<std::pair<std::vector<std::uint8_t>, std::string>>& rows) {
    PayloadDataset d;
    d.labels.intern(kBenignLabel);
    for (const auto& [bytes, label] : rows) {
        LabeledPayload p;
        std::copy(bytes.begin(), bytes.end(), p.bytes.begin());
        p.label = d.labels.intern(label);
        d.rows.push_back(p);
    }
    return d;
}

} // namespace

TEST_CASE("pcap: empty capture") {
    auto bytes = testutil::build_pcap({});
    auto in = stream_of(bytes);
    CHECK(parse_pcap(in).empty());
}

TEST_CASE("pcap: byte-swapped single record") {
    std::vector<std::uint8_t> frame(60, 0xAB);
    auto bytes = testutil::build_pcap({{7, 8, frame}}, /*swapped=*/true);
    auto in = stream_of(bytes);
    auto pkts = parse_pcap(in);
    REQUIRE(pkts.size() == 1);
    CHECK(pkts[0].caplen == 60);
    CHECK(pkts[0].ts_sec == 7);
    CHECK(pkts[0].ts_usec == 8);
    CHECK(pkts[0].link_bytes == frame);
}

TEST_CASE("pcap: hand-assembled two-packet capture") {
    FrameSpec a;
    a.payload = {0x41, 0x42, 0x43};
    FrameSpec b;
    b.protocol = 17;
    b.payload = {0x01};
    auto bytes = testutil::build_pcap({{100, 1, testutil::build_ipv4_frame(a)},
                                       {200, 2, testutil::build_ipv4_frame(b)}});
    auto in = stream_of(bytes);
    auto pkts = parse_pcap(in);
    REQUIRE(pkts.size() == 2);
    CHECK(pkts[0].ts_sec == 100);
    CHECK(pkts[0].ts_usec == 1);
    CHECK(pkts[1].ts_sec == 200);
    CHECK(pkts[1].ts_usec == 2);
    CHECK(pkts[0].caplen == testutil::build_ipv4_frame(a).size());
}

TEST_CASE("pcap: malformed magic and truncation") {
    auto bytes = testutil::build_pcap({});
    bytes[0] ^= 0xFF;
    auto in = stream_of(bytes);
    CHECK_THROWS_AS(parse_pcap(in), FormatError);

    FrameSpec s;
    s.payload = {1, 2, 3, 4};
    auto good = testutil::build_pcap({{0, 0, testutil::build_ipv4_frame(s)}});
    good.resize(good.size() - 2); // chop the tail of the packet data
    auto in2 = stream_of(good);
    try {
        parse_pcap(in2);
        FAIL("expected TruncationError");
    } catch (const TruncationError& e) {
        CHECK(std::string(e.what()).find("packet 0") != std::string::npos);
    }
}

TEST_CASE("extract: tcp payload is right-padded to 1500") {
    FrameSpec s;
    s.payload = {0x41, 0x42};
    RawPacket pkt;
    pkt.link_bytes = testutil::build_ipv4_frame(s);
    pkt.caplen = static_cast<std::uint32_t>(pkt.link_bytes.size());
    pkt.origlen = pkt.caplen;

    auto e = extract_payload(pkt);
    REQUIRE(e.has_value());
    CHECK(e->bytes[0] == 0x41);
    CHECK(e->bytes[1] == 0x42);
    for (std::size_t i = 2; i < kPayloadWidth; ++i) REQUIRE(e->bytes[i] == 0);
    CHECK(e->flow.dst_port == 80);
    CHECK(e->flow.protocol == 6);
}

TEST_CASE("extract: oversized udp payload is truncated at 1500") {
    FrameSpec s;
    s.protocol = 17;
    s.payload.resize(1600);
    for (std::size_t i = 0; i < s.payload.size(); ++i)
        s.payload[i] = static_cast<std::uint8_t>(i & 0xFF);
    RawPacket pkt;
    pkt.link_bytes = testutil::build_ipv4_frame(s);
    pkt.caplen = static_cast<std::uint32_t>(pkt.link_bytes.size());
    pkt.origlen = pkt.caplen;

    auto e = extract_payload(pkt);
    REQUIRE(e.has_value());
    for (std::size_t i = 0; i < kPayloadWidth; ++i)
        REQUIRE(e->bytes[i] == static_cast<std::uint8_t>(i & 0xFF));
}

TEST_CASE("extract: ipv6 tcp and udp payloads") {
    for (std::uint8_t proto : {std::uint8_t{6}, std::uint8_t{17}}) {
        FrameSpec s;
        s.protocol = proto;
        s.src_port = 4444;
        s.dst_port = 443;
        s.payload = {0xDE, 0xAD, 0xBE};
        RawPacket pkt;
        pkt.link_bytes = testutil::build_ipv6_frame(s);
        pkt.caplen = static_cast<std::uint32_t>(pkt.link_bytes.size());
        pkt.origlen = pkt.caplen;

        auto e = extract_payload(pkt);
        REQUIRE(e.has_value());
        CHECK(e->bytes[0] == 0xDE);
        CHECK(e->bytes[2] == 0xBE);
        CHECK(e->bytes[3] == 0);
        CHECK(e->flow.ipv6);
        CHECK(e->flow.dst_port == 443);
        CHECK(e->flow.src_ip[0] == 0x20);
        CHECK(e->flow.dst_ip[15] == 0x3F);
    }

    // A capture cut inside the v6 header is a parse error.
    FrameSpec s;
    s.payload = {1};
    RawPacket cut;
    cut.link_bytes = testutil::build_ipv6_frame(s);
    cut.link_bytes.resize(30);
    cut.caplen = 30;
    cut.origlen = 90;
    CHECK_THROWS_AS(extract_payload(cut), ParseError);
}

TEST_CASE("extract: zero-payload syn is skipped, not emitted") {
    FrameSpec s; // tcp, no payload
    RawPacket pkt;
    pkt.link_bytes = testutil::build_ipv4_frame(s);
    pkt.caplen = static_cast<std::uint32_t>(pkt.link_bytes.size());
    pkt.origlen = pkt.caplen;

    SkipReason why = SkipReason::None;
    CHECK_FALSE(extract_payload(pkt, &why).has_value());
    CHECK(why == SkipReason::NoPayload);
}

TEST_CASE("extract: unsupported protocols are skipped with a distinct reason") {
    FrameSpec s;
    s.payload = {9, 9};
    RawPacket pkt;
    pkt.link_bytes = testutil::build_ipv4_frame(s);
    pkt.link_bytes[23] = 1; // rewrite IP protocol to ICMP
    pkt.caplen = static_cast<std::uint32_t>(pkt.link_bytes.size());
    pkt.origlen = pkt.caplen;

    SkipReason why = SkipReason::None;
    CHECK_FALSE(extract_payload(pkt, &why).has_value());
    CHECK(why == SkipReason::Unsupported);
}

TEST_CASE("extract: inconsistent header lengths raise ParseError") {
    FrameSpec s;
    s.payload = {1, 2, 3};
    RawPacket pkt;
    pkt.link_bytes = testutil::build_ipv4_frame(s);
    pkt.caplen = static_cast<std::uint32_t>(pkt.link_bytes.size());
    pkt.origlen = pkt.caplen;
    pkt.link_bytes[14] = 0x4F; // ihl = 15 words, far past the capture
    CHECK_THROWS_AS(extract_payload(pkt), ParseError);

    // A capture cut inside the IP header is also a parse error, not a skip.
    RawPacket cut;
    cut.link_bytes = testutil::build_ipv4_frame(s);
    cut.link_bytes.resize(20);
    cut.caplen = 20;
    cut.origlen = 80;
    CHECK_THROWS_AS(extract_payload(cut), ParseError);
}

TEST_CASE("extract: fuzz over well-formed packets always yields 1500 bytes") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> proto_pick(0, 1);
    std::uniform_int_distribution<int> len_pick(1, 2000);
    std::uniform_int_distribution<int> byte_pick(0, 255);
    for (int i = 0; i < 200; ++i) {
        FrameSpec s;
        s.protocol = proto_pick(rng) ? 6 : 17;
        s.payload.resize(static_cast<std::size_t>(len_pick(rng)));
        for (auto& b : s.payload) b = static_cast<std::uint8_t>(byte_pick(rng));
        RawPacket pkt;
        pkt.link_bytes = testutil::build_ipv4_frame(s);
        pkt.caplen = static_cast<std::uint32_t>(pkt.link_bytes.size());
        pkt.origlen = pkt.caplen;
        auto e = extract_payload(pkt);
        REQUIRE(e.has_value());
        const std::size_t n = std::min(s.payload.size(), kPayloadWidth);
        for (std::size_t k = 0; k < n; ++k) REQUIRE(e->bytes[k] == s.payload[k]);
        for (std::size_t k = n; k < kPayloadWidth; ++k) REQUIRE(e->bytes[k] == 0);
    }
}

TEST_CASE("labeling: precedence, default, exact match") {
    std::vector<ExtractedPayload> payloads(3);
    payloads[0].flow.dst_port = 80;
    payloads[0].flow.protocol = 6;
    payloads[1].flow.dst_port = 53;
    payloads[1].flow.protocol = 17;
    payloads[2].flow.dst_port = 80;
    payloads[2].flow.protocol = 6;
    payloads[2].flow.src_port = 7777;

    LabelRule hulk;
    hulk.dst_port = 80;
    hulk.label = "DoS Hulk";
    LabelRule shadow; // also matches dst 80, but declared later
    shadow.dst_port = 80;
    shadow.protocol = 6;
    shadow.label = "Shadow";

    auto ds = label_packets(payloads, {hulk, shadow});
    REQUIRE(ds.rows.size() == 3);
    CHECK(ds.labels.name(ds.rows[0].label) == "DoS Hulk");
    CHECK(ds.labels.name(ds.rows[1].label) == kBenignLabel);
    CHECK(ds.labels.name(ds.rows[2].label) == "DoS Hulk"); // first rule wins
    CHECK(ds.labels.find(kBenignLabel) == 0);
}

TEST_CASE("normalize maps bytes onto [0,1]") {
    LabeledPayload p;
    auto v = normalize(p);
    CHECK(v.minCoeff() == 0.0);
    CHECK(v.maxCoeff() == 0.0);

    p.bytes[0] = 255;
    p.bytes[1] = 51;
    v = normalize(p);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == doctest::Approx(0.2));
    CHECK(v.size() == 1500);
}

TEST_CASE("resample: rates, determinism, identity") {
    std::vector<std::pair<std::vector<std::uint8_t>, std::string>> rows;
    for (int i = 0; i < 1000; ++i) rows.push_back({{static_cast<std::uint8_t>(i & 0xFF)}, "A"});
    for (int i = 0; i < 58; ++i) rows.push_back({{static_cast<std::uint8_t>(i)}, "B"});
    for (int i = 0; i < 10; ++i) rows.push_back({{static_cast<std::uint8_t>(i)}, "C"});
    auto ds = make_dataset(rows);

    ResamplePlan plan;
    plan.rates = {{ds.labels.intern("A"), 0.10},
                  {ds.labels.intern("B"), 3.0}};

    auto out = resample(ds, plan, 9001);
    std::map<std::uint16_t, int> counts;
    for (const auto& r : out.rows) counts[r.label]++;
    CHECK(counts[ds.labels.intern("A")] == 100);
    CHECK(counts[ds.labels.intern("B")] == 174);
    CHECK(counts[ds.labels.intern("C")] == 10);

    auto again = resample(ds, plan, 9001);
    REQUIRE(again.rows.size() == out.rows.size());
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        REQUIRE(again.rows[i].label == out.rows[i].label);
        REQUIRE(again.rows[i].bytes == out.rows[i].bytes);
    }

    // Multiplier 1 keeps the class as an identical multiset (here: order too).
    std::multiset<std::vector<std::uint8_t>> before, after;
    for (const auto& r : ds.rows)
        if (ds.labels.name(r.label) == "C") before.insert({r.bytes.begin(), r.bytes.end()});
    for (const auto& r : out.rows)
        if (out.labels.name(r.label) == "C") after.insert({r.bytes.begin(), r.bytes.end()});
    CHECK(before == after);

    ResamplePlan vanish;
    vanish.rates = {{ds.labels.intern("C"), 0.01}};
    CHECK_THROWS_AS(resample(ds, vanish, 1), DataError);
}

TEST_CASE("payload csv and binary round-trips") {
    std::vector<std::pair<std::vector<std::uint8_t>, std::string>> rows = {
        {{0, 1, 2, 255}, "DoS Hulk"},
        {{9}, kBenignLabel},
        {{7, 7, 7}, "Port Scan"},
    };
    auto ds = make_dataset(rows);

    std::stringstream csv;
    write_payload_csv(csv, ds);
    auto from_csv = read_payload_csv(csv);
    REQUIRE(from_csv.rows.size() == ds.rows.size());
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        CHECK(from_csv.rows[i].bytes == ds.rows[i].bytes);
        CHECK(from_csv.labels.name(from_csv.rows[i].label) == ds.labels.name(ds.rows[i].label));
    }

    std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
    write_payload_bin(bin, ds);
    auto from_bin = read_payload_bin(bin);
    REQUIRE(from_bin.rows.size() == ds.rows.size());
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        CHECK(from_bin.rows[i].bytes == ds.rows[i].bytes);
        CHECK(from_bin.rows[i].label == ds.rows[i].label);
    }
    CHECK(from_bin.labels.names() == ds.labels.names());

    std::stringstream bad(std::ios::in | std::ios::out | std::ios::binary);
    bad << "ODXUXX1";
    CHECK_THROWS_AS(read_payload_bin(bad), FormatError);
}

TEST_CASE("ingest: pcap to labeled dataset with stats") {
    FrameSpec web;
    web.payload = {'G', 'E', 'T'};
    web.dst_port = 80;
    FrameSpec dns;
    dns.protocol = 17;
    dns.dst_port = 53;
    dns.payload = {0x12};
    FrameSpec syn; // zero payload -> skipped

    auto bytes = testutil::build_pcap({{0, 0, testutil::build_ipv4_frame(web)},
                                       {1, 0, testutil::build_ipv4_frame(syn)},
                                       {2, 0, testutil::build_ipv4_frame(dns)}});
    LabelRule rule;
    rule.dst_port = 80;
    rule.label = "DoS Hulk";

    auto in = stream_of(bytes);
    ExtractStats stats;
    auto ds = ingest_pcap(in, {rule}, &stats);
    CHECK(stats.packets == 3);
    CHECK(stats.emitted == 2);
    CHECK(stats.skipped_no_payload == 1);
    CHECK(stats.skipped_unsupported == 0);
    REQUIRE(ds.rows.size() == 2);
    CHECK(ds.labels.name(ds.rows[0].label) == "DoS Hulk");
    CHECK(ds.labels.name(ds.rows[1].label) == kBenignLabel);
}
