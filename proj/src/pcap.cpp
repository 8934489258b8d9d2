#include "odxu/pcap.hpp"

#include <cstdio>
#include <cstring>
#include <string>

namespace odxu {

namespace {

std::uint32_t swap32(std::uint32_t v) {
    return ((v & 0x000000FFu) << 24) | ((v & 0x0000FF00u) << 8) | ((v & 0x00FF0000u) >> 8) |
           ((v & 0xFF000000u) >> 24);
}

std::uint32_t load_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Records longer than any sane snaplen mean a corrupt length field.
constexpr std::uint32_t kMaxRecordLen = 0x04000000; // 64 MiB

} // namespace

std::vector<RawPacket> parse_pcap(std::istream& in) {
    unsigned char header[24];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (in.gcount() != sizeof(header))
        throw FormatError("pcap: file shorter than the 24-byte global header");

    const std::uint32_t magic_raw = load_u32le(header);
    bool swapped = false;
    if (magic_raw == kPcapMagic) {
        swapped = false;
    } else if (magic_raw == kPcapMagicSwapped) {
        swapped = true;
    } else {
        throw FormatError("pcap: bad magic 0x" + [&] {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%08X", magic_raw);
            return std::string(buf);
        }());
    }

    auto field = [&](const unsigned char* p) {
        const std::uint32_t v = load_u32le(p);
        return swapped ? swap32(v) : v;
    };

    const std::uint32_t network = field(header + 20);
    if (network != kLinkTypeEthernet)
        throw FormatError("pcap: unsupported link type " + std::to_string(network) +
                          " (only Ethernet is handled)");

    std::vector<RawPacket> packets;
    for (std::size_t index = 0;; ++index) {
        unsigned char rec[16];
        in.read(reinterpret_cast<char*>(rec), sizeof(rec));
        if (in.gcount() == 0 && in.eof()) break; // clean EOF between records
        if (in.gcount() != sizeof(rec))
            throw TruncationError("pcap: record header of packet " + std::to_string(index) +
                                  " is truncated");

        RawPacket pkt;
        pkt.ts_sec = field(rec);
        pkt.ts_usec = field(rec + 4);
        pkt.caplen = field(rec + 8);
        pkt.origlen = field(rec + 12);
        if (pkt.caplen > kMaxRecordLen)
            throw FormatError("pcap: packet " + std::to_string(index) +
                              " claims an implausible captured length");
        if (pkt.caplen > pkt.origlen)
            throw FormatError("pcap: packet " + std::to_string(index) +
                              " has caplen greater than original length");

        pkt.link_bytes.resize(pkt.caplen);
        in.read(reinterpret_cast<char*>(pkt.link_bytes.data()),
                static_cast<std::streamsize>(pkt.caplen));
        if (static_cast<std::uint32_t>(in.gcount()) != pkt.caplen)
            throw TruncationError("pcap: packet " + std::to_string(index) +
                                  " data is truncated");
        packets.push_back(std::move(pkt));
    }
    return packets;
}

} // namespace odxu
