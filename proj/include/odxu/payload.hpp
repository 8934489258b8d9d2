#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "odxu/dataset.hpp"
#include "odxu/labels.hpp"
#include "odxu/pcap.hpp"

namespace odxu {

inline constexpr std::size_t kPayloadWidth = 1500;

struct FlowKey {
    std::array<std::uint8_t, 16> src_ip{}; // IPv4 stored in the first 4 bytes
    std::array<std::uint8_t, 16> dst_ip{};
    bool ipv6 = false;
    std::uint16_t src_port = 0; // 0 for non-TCP/UDP
    std::uint16_t dst_port = 0;
    std::uint8_t protocol = 0; // IP protocol number

    bool operator==(const FlowKey&) const = default;
};

struct LabeledPayload {
    std::array<std::uint8_t, kPayloadWidth> bytes{};
    std::uint16_t label = 0;
    FlowKey flow;
};

struct PayloadDataset {
    std::vector<LabeledPayload> rows;
    LabelTable labels;
};

// Transport payload standardized to 1500 bytes plus the 5-tuple it came from.
struct ExtractedPayload {
    std::array<std::uint8_t, kPayloadWidth> bytes{};
    FlowKey flow;
};

enum class SkipReason { None, NoPayload, Unsupported };

// Ethernet II -> IPv4/IPv6 -> TCP/UDP. Returns nothing for packets with no
// transport payload or an unsupported protocol stack; throws ParseError when
// header fields contradict the captured length.
std::optional<ExtractedPayload> extract_payload(const RawPacket& pkt,
                                                SkipReason* reason = nullptr);

// One rule of the flow-label map: unset fields are wildcards.
struct LabelRule {
    std::optional<std::array<std::uint8_t, 16>> src_ip;
    std::optional<std::array<std::uint8_t, 16>> dst_ip;
    std::optional<std::uint16_t> src_port;
    std::optional<std::uint16_t> dst_port;
    std::optional<std::uint8_t> protocol;
    std::string label;
};

inline constexpr const char* kBenignLabel = "Benign";

// First matching rule wins (declaration order); unmatched packets are Benign.
PayloadDataset label_packets(const std::vector<ExtractedPayload>& payloads,
                             const std::vector<LabelRule>& rules);

// values[i] = bytes[i] / 255.
Eigen::VectorXd normalize(const LabeledPayload& p);

// Whole-corpus variant; preserves row order and interned labels.
Dataset normalize_dataset(const PayloadDataset& data);

// class id -> multiplier; .10 keeps 10%, 3.0 triplicates.
struct ResamplePlan {
    std::vector<std::pair<std::uint16_t, double>> rates;
};

// round(n*m) rows per class; m<1 samples without replacement, m>1 keeps all
// originals plus duplicates drawn with replacement. Deterministic given seed.
PayloadDataset resample(const PayloadDataset& data, const ResamplePlan& plan, std::uint64_t seed);

// Columnar CSV: b0..b1499,label.
void write_payload_csv(std::ostream& out, const PayloadDataset& data);
PayloadDataset read_payload_csv(std::istream& in);

// Compact binary form, magic "ODXUPB1": u32 row count, rows of 1500 bytes +
// u16 label id, trailing label-name table.
void write_payload_bin(std::ostream& out, const PayloadDataset& data);
PayloadDataset read_payload_bin(std::istream& in);

struct ExtractStats {
    std::size_t packets = 0;
    std::size_t emitted = 0;
    std::size_t skipped_no_payload = 0;
    std::size_t skipped_unsupported = 0;
};

// Full ingest pass: parse, extract, label. Parse errors on individual packets
// propagate; unsupported stacks and empty payloads are counted and skipped.
PayloadDataset ingest_pcap(std::istream& in, const std::vector<LabelRule>& rules,
                           ExtractStats* stats = nullptr);

} // namespace odxu
