#include "odxu/payload.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace odxu {

namespace {

std::uint16_t load_u16be(const std::uint8_t* p) {
    return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

constexpr std::uint16_t kEthertypeIpv4 = 0x0800;
constexpr std::uint16_t kEthertypeIpv6 = 0x86DD;
constexpr std::uint8_t kProtoTcp = 6;
constexpr std::uint8_t kProtoUdp = 17;

struct TransportView {
    FlowKey flow;
    const std::uint8_t* payload = nullptr;
    std::size_t length = 0;
};

// Parses the transport header at data[offset..] and resolves the payload
// span. declared_len is the IP-layer payload length (transport header
// included); available is what the capture actually holds.
TransportView parse_transport(const RawPacket& pkt, const std::uint8_t* data, std::size_t offset,
                              std::size_t declared_len, FlowKey flow) {
    const std::size_t available = pkt.caplen - offset;
    const std::uint8_t* tp = data + offset;

    std::size_t header_len = 0;
    std::size_t payload_declared = 0;
    if (flow.protocol == kProtoTcp) {
        if (available < 20) throw ParseError("tcp header extends past captured bytes");
        header_len = static_cast<std::size_t>(tp[12] >> 4) * 4;
        if (header_len < 20) throw ParseError("tcp data offset below minimum header size");
        if (header_len > available) throw ParseError("tcp header extends past captured bytes");
        if (declared_len < header_len) throw ParseError("ip payload shorter than tcp header");
        payload_declared = declared_len - header_len;
    } else {
        if (available < 8) throw ParseError("udp header extends past captured bytes");
        const std::uint16_t udp_len = load_u16be(tp + 4);
        if (udp_len < 8) throw ParseError("udp length field below header size");
        if (udp_len > declared_len) throw ParseError("udp length exceeds ip payload");
        header_len = 8;
        payload_declared = udp_len - 8;
    }

    flow.src_port = load_u16be(tp);
    flow.dst_port = load_u16be(tp + 2);

    TransportView view;
    view.flow = flow;
    view.payload = tp + header_len;
    // The capture may snap long packets; take what is present.
    view.length = std::min(payload_declared, available - header_len);
    return view;
}

} // namespace

std::optional<ExtractedPayload> extract_payload(const RawPacket& pkt, SkipReason* reason) {
    if (reason) *reason = SkipReason::None;
    const std::uint8_t* data = pkt.link_bytes.data();
    if (pkt.caplen < 14) throw ParseError("frame shorter than an Ethernet II header");

    const std::uint16_t ethertype = load_u16be(data + 12);
    FlowKey flow;
    std::size_t ip_offset = 14;
    std::size_t transport_offset = 0;
    std::size_t declared_len = 0;

    if (ethertype == kEthertypeIpv4) {
        if (pkt.caplen < ip_offset + 20) throw ParseError("ipv4 header extends past captured bytes");
        const std::uint8_t* ip = data + ip_offset;
        if ((ip[0] >> 4) != 4) throw ParseError("ipv4 ethertype with non-4 version field");
        const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0F) * 4;
        if (ihl < 20) throw ParseError("ipv4 header length below minimum");
        if (ip_offset + ihl > pkt.caplen) throw ParseError("ipv4 options extend past captured bytes");
        const std::uint16_t total_len = load_u16be(ip + 2);
        if (total_len < ihl) throw ParseError("ipv4 total length below header length");

        flow.protocol = ip[9];
        std::copy(ip + 12, ip + 16, flow.src_ip.begin());
        std::copy(ip + 16, ip + 20, flow.dst_ip.begin());
        transport_offset = ip_offset + ihl;
        declared_len = total_len - ihl;
    } else if (ethertype == kEthertypeIpv6) {
        if (pkt.caplen < ip_offset + 40) throw ParseError("ipv6 header extends past captured bytes");
        const std::uint8_t* ip = data + ip_offset;
        if ((ip[0] >> 4) != 6) throw ParseError("ipv6 ethertype with non-6 version field");
        flow.ipv6 = true;
        flow.protocol = ip[6]; // next header; extension chains are unsupported
        std::copy(ip + 8, ip + 24, flow.src_ip.begin());
        std::copy(ip + 24, ip + 40, flow.dst_ip.begin());
        transport_offset = ip_offset + 40;
        declared_len = load_u16be(ip + 4);
    } else {
        if (reason) *reason = SkipReason::Unsupported; // non-IP traffic
        return std::nullopt;
    }

    if (flow.protocol != kProtoTcp && flow.protocol != kProtoUdp) {
        if (reason) *reason = SkipReason::Unsupported;
        return std::nullopt;
    }
    if (transport_offset > pkt.caplen) throw ParseError("transport header past captured bytes");

    const TransportView view = parse_transport(pkt, data, transport_offset, declared_len, flow);
    if (view.length == 0) {
        if (reason) *reason = SkipReason::NoPayload;
        return std::nullopt;
    }

    ExtractedPayload out;
    out.flow = view.flow;
    const std::size_t n = std::min(view.length, kPayloadWidth);
    std::copy(view.payload, view.payload + n, out.bytes.begin());
    return out;
}

PayloadDataset label_packets(const std::vector<ExtractedPayload>& payloads,
                             const std::vector<LabelRule>& rules) {
    PayloadDataset out;
    const std::uint16_t benign = out.labels.intern(kBenignLabel);

    auto matches = [](const LabelRule& r, const FlowKey& f) {
        if (r.src_ip && *r.src_ip != f.src_ip) return false;
        if (r.dst_ip && *r.dst_ip != f.dst_ip) return false;
        if (r.src_port && *r.src_port != f.src_port) return false;
        if (r.dst_port && *r.dst_port != f.dst_port) return false;
        if (r.protocol && *r.protocol != f.protocol) return false;
        return true;
    };

    out.rows.reserve(payloads.size());
    for (const auto& p : payloads) {
        LabeledPayload row;
        row.bytes = p.bytes;
        row.flow = p.flow;
        row.label = benign;
        for (const auto& rule : rules) {
            if (matches(rule, p.flow)) {
                row.label = out.labels.intern(rule.label);
                break;
            }
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

Eigen::VectorXd normalize(const LabeledPayload& p) {
    Eigen::VectorXd v(kPayloadWidth);
    for (std::size_t i = 0; i < kPayloadWidth; ++i)
        v[static_cast<Eigen::Index>(i)] = p.bytes[i] / 255.0;
    return v;
}

Dataset normalize_dataset(const PayloadDataset& data) {
    Dataset out;
    out.labels = data.labels;
    out.X.resize(static_cast<Eigen::Index>(data.rows.size()), kPayloadWidth);
    out.y.resize(data.rows.size());
    for (std::size_t r = 0; r < data.rows.size(); ++r) {
        for (std::size_t c = 0; c < kPayloadWidth; ++c)
            out.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                data.rows[r].bytes[c] / 255.0;
        out.y[r] = data.rows[r].label;
    }
    return out;
}

PayloadDataset resample(const PayloadDataset& data, const ResamplePlan& plan, std::uint64_t seed) {
    std::map<std::uint16_t, double> rate;
    for (const auto& [cls, m] : plan.rates) {
        if (!(m > 0.0)) throw DataError("resample: multiplier must be positive");
        rate[cls] = m;
    }

    // Classes visited in ascending id order keeps draws independent of input
    // ordering quirks.
    std::map<std::uint16_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.rows.size(); ++i) by_class[data.rows[i].label].push_back(i);

    std::mt19937_64 rng(seed);
    PayloadDataset out;
    out.labels = data.labels;

    for (const auto& [cls, idx] : by_class) {
        const double m = rate.count(cls) ? rate.at(cls) : 1.0;
        const auto n = static_cast<long long>(idx.size());
        const auto target = static_cast<long long>(std::llround(static_cast<double>(n) * m));
        if (target == 0)
            throw DataError("resample: class '" + data.labels.name(cls) + "' would vanish");

        if (target == n) {
            for (auto i : idx) out.rows.push_back(data.rows[i]);
        } else if (target < n) {
            // Partial Fisher-Yates, then restore original order.
            std::vector<std::size_t> pool(idx);
            for (long long k = 0; k < target; ++k) {
                std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k),
                                                                pool.size() - 1);
                std::swap(pool[static_cast<std::size_t>(k)], pool[pick(rng)]);
            }
            pool.resize(static_cast<std::size_t>(target));
            std::sort(pool.begin(), pool.end());
            for (auto i : pool) out.rows.push_back(data.rows[i]);
        } else {
            for (auto i : idx) out.rows.push_back(data.rows[i]);
            std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
            for (long long k = n; k < target; ++k) out.rows.push_back(data.rows[idx[pick(rng)]]);
        }
    }
    return out;
}

void write_payload_csv(std::ostream& out, const PayloadDataset& data) {
    for (std::size_t c = 0; c < kPayloadWidth; ++c) out << 'b' << c << ',';
    out << "label\n";
    for (const auto& row : data.rows) {
        for (std::size_t c = 0; c < kPayloadWidth; ++c)
            out << static_cast<unsigned>(row.bytes[c]) << ',';
        out << data.labels.name(row.label) << '\n';
    }
}

PayloadDataset read_payload_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("payload csv: missing header");
    if (line.rfind("b0,", 0) != 0) throw FormatError("payload csv: unexpected header");

    PayloadDataset out;
    out.labels.intern(kBenignLabel);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        LabeledPayload row;
        std::size_t pos = 0;
        for (std::size_t c = 0; c < kPayloadWidth; ++c) {
            const std::size_t comma = line.find(',', pos);
            if (comma == std::string::npos)
                throw FormatError("payload csv: line " + std::to_string(lineno) + " too short");
            const int v = std::stoi(line.substr(pos, comma - pos));
            if (v < 0 || v > 255)
                throw FormatError("payload csv: byte out of range on line " +
                                  std::to_string(lineno));
            row.bytes[c] = static_cast<std::uint8_t>(v);
            pos = comma + 1;
        }
        row.label = out.labels.intern(line.substr(pos));
        out.rows.push_back(std::move(row));
    }
    return out;
}

namespace {

constexpr char kPayloadMagic[7] = {'O', 'D', 'X', 'U', 'P', 'B', '1'};

void put_u16(std::ostream& out, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
    out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

std::uint16_t get_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (in.gcount() != 2) throw TruncationError("payload bin: unexpected end of stream");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw TruncationError("payload bin: unexpected end of stream");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

void write_payload_bin(std::ostream& out, const PayloadDataset& data) {
    out.write(kPayloadMagic, sizeof(kPayloadMagic));
    put_u32(out, static_cast<std::uint32_t>(data.rows.size()));
    for (const auto& row : data.rows) {
        out.write(reinterpret_cast<const char*>(row.bytes.data()), kPayloadWidth);
        put_u16(out, row.label);
    }
    put_u16(out, static_cast<std::uint16_t>(data.labels.size()));
    for (const auto& name : data.labels.names()) {
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
}

PayloadDataset read_payload_bin(std::istream& in) {
    char magic[sizeof(kPayloadMagic)];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kPayloadMagic, sizeof(magic)) != 0)
        throw FormatError("payload bin: bad magic (expected ODXUPB1)");

    PayloadDataset out;
    const std::uint32_t count = get_u32(in);
    out.rows.resize(count);
    for (auto& row : out.rows) {
        in.read(reinterpret_cast<char*>(row.bytes.data()), kPayloadWidth);
        if (static_cast<std::size_t>(in.gcount()) != kPayloadWidth)
            throw TruncationError("payload bin: row data truncated");
        row.label = get_u16(in);
    }
    const std::uint16_t n_labels = get_u16(in);
    for (std::uint16_t i = 0; i < n_labels; ++i) {
        const std::uint16_t len = get_u16(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (in.gcount() != len) throw TruncationError("payload bin: label table truncated");
        out.labels.intern(name);
    }
    for (const auto& row : out.rows)
        if (row.label >= out.labels.size())
            throw FormatError("payload bin: row references a label id beyond the table");
    return out;
}

PayloadDataset ingest_pcap(std::istream& in, const std::vector<LabelRule>& rules,
                           ExtractStats* stats) {
    const auto packets = parse_pcap(in);
    std::vector<ExtractedPayload> payloads;
    ExtractStats local;
    local.packets = packets.size();
    for (const auto& pkt : packets) {
        SkipReason why = SkipReason::None;
        if (auto e = extract_payload(pkt, &why)) {
            payloads.push_back(std::move(*e));
        } else if (why == SkipReason::NoPayload) {
            ++local.skipped_no_payload;
        } else {
            ++local.skipped_unsupported;
        }
    }
    auto out = label_packets(payloads, rules);
    local.emitted = out.rows.size();
    if (stats) *stats = local;
    return out;
}

} // namespace odxu
