// Builds classic-PCAP captures in memory for parser tests.
#pragma once

#include <cstdint>
#include <vector>

#include "paysent/common.hpp"

namespace pcaptest {

using paysent::Bytes;

inline void put32(Bytes& b, std::uint32_t v, bool swap) {
    if (swap) v = __builtin_bswap32(v);
    for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t(v >> (8 * i)));
}

inline void put16(Bytes& b, std::uint16_t v, bool swap) {
    if (swap) v = std::uint16_t((v >> 8) | (v << 8));
    b.push_back(std::uint8_t(v));
    b.push_back(std::uint8_t(v >> 8));
}

inline Bytes global_header(bool swapped, std::uint32_t linktype = 1) {
    Bytes b;
    put32(b, 0xa1b2c3d4u, swapped);
    put32(b, 0x00040002u, swapped);  // version 2.4 (minor, major order per LE layout)
    put32(b, 0, swapped);            // thiszone
    put32(b, 0, swapped);            // sigfigs
    put32(b, 65535, swapped);        // snaplen
    put32(b, linktype, swapped);
    return b;
}

// ethernet/IPv4/TCP-or-UDP packet with the given payload
inline Bytes packet(const Bytes& payload, bool udp = false, std::uint16_t ethertype = 0x0800) {
    Bytes p;
    // ethernet
    for (int i = 0; i < 12; ++i) p.push_back(std::uint8_t(i));
    p.push_back(std::uint8_t(ethertype >> 8));
    p.push_back(std::uint8_t(ethertype));
    // ipv4 header, 20 bytes
    std::size_t l4_len = (udp ? 8 : 20) + payload.size();
    std::uint16_t total = std::uint16_t(20 + l4_len);
    p.push_back(0x45);
    p.push_back(0);
    p.push_back(std::uint8_t(total >> 8));
    p.push_back(std::uint8_t(total));
    for (int i = 0; i < 4; ++i) p.push_back(0);  // id, flags
    p.push_back(64);                              // ttl
    p.push_back(udp ? 17 : 6);                    // protocol
    p.push_back(0); p.push_back(0);               // checksum
    for (int i = 0; i < 8; ++i) p.push_back(std::uint8_t(10 + i));  // addresses
    if (udp) {
        p.push_back(0x1f); p.push_back(0x90);  // sport 8080
        p.push_back(0x00); p.push_back(0x50);  // dport 80
        std::uint16_t ulen = std::uint16_t(8 + payload.size());
        p.push_back(std::uint8_t(ulen >> 8)); p.push_back(std::uint8_t(ulen));
        p.push_back(0); p.push_back(0);
    } else {
        p.push_back(0x1f); p.push_back(0x90);
        p.push_back(0x00); p.push_back(0x50);
        for (int i = 0; i < 8; ++i) p.push_back(0);  // seq, ack
        p.push_back(0x50);                           // data offset 5
        p.push_back(0x18);                           // flags
        p.push_back(0xff); p.push_back(0xff);        // window
        for (int i = 0; i < 4; ++i) p.push_back(0);  // checksum, urgent
    }
    p.insert(p.end(), payload.begin(), payload.end());
    return p;
}

inline void append_record(Bytes& cap, const Bytes& pkt, bool swapped) {
    put32(cap, 1000, swapped);  // ts sec
    put32(cap, 0, swapped);     // ts usec
    put32(cap, std::uint32_t(pkt.size()), swapped);
    put32(cap, std::uint32_t(pkt.size()), swapped);
    cap.insert(cap.end(), pkt.begin(), pkt.end());
}

inline Bytes capture(const std::vector<Bytes>& packets, bool swapped = false, std::uint32_t linktype = 1) {
    Bytes cap = global_header(swapped, linktype);
    for (const auto& p : packets) append_record(cap, p, swapped);
    return cap;
}

}  // namespace pcaptest
