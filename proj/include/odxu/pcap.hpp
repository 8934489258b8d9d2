#pragma once

#include <cstdint>
#include <istream>
#include <vector>

#include "odxu/errors.hpp"

namespace odxu {

struct RawPacket {
    std::uint32_t ts_sec = 0;
    std::uint32_t ts_usec = 0;
    std::uint32_t caplen = 0;  // captured length == link_bytes.size()
    std::uint32_t origlen = 0; // original on-wire length
    std::vector<std::uint8_t> link_bytes;
};

// Classic libpcap reader. Accepts magic 0xA1B2C3D4 in either byte order,
// link type Ethernet only. Throws FormatError on a bad header and
// TruncationError (naming the packet index) on a short record.
std::vector<RawPacket> parse_pcap(std::istream& in);

// File-format constants shared with the writer used in tests and tools.
inline constexpr std::uint32_t kPcapMagic = 0xA1B2C3D4u;
inline constexpr std::uint32_t kPcapMagicSwapped = 0xD4C3B2A1u;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;

} // namespace odxu
