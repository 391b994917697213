#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "paysent/common.hpp"

namespace paysent {

/// One labeled payload. label: 0 = normal, 1 = anomalous.
struct PayloadSample {
    std::int64_t id = 0;
    Bytes payload;
    int label = 0;
    std::string source;
};

struct DatasetSplit {
    std::vector<std::int64_t> train;
    std::vector<std::int64_t> validation;
    std::vector<std::int64_t> test;
    std::uint64_t seed = 0;
};

namespace detail {

inline bool is_http_method(std::string_view line) {
    static const char* methods[] = {"GET ", "POST ", "PUT ", "HEAD ", "DELETE ", "OPTIONS ", "TRACE ", "PATCH ", "CONNECT "};
    for (const char* m : methods)
        if (line.substr(0, std::string_view(m).size()) == m) return true;
    return false;
}

inline bool is_request_line(std::string_view line) {
    return is_http_method(line) && line.find(" HTTP/") != std::string_view::npos;
}

}  // namespace detail

// Parse CSIC-2010 style raw HTTP request text. Records start with a request
// line ("METHOD uri HTTP/x.y"), followed by header lines, a blank line and an
// optional body. All records in one call share `label` (CSIC labels by file).
// With strip_headers the payload is the request line plus the body; header
// fields are dropped.
inline std::vector<PayloadSample> parse_http_text(const Bytes& raw, bool strip_headers, int label,
                                                  const std::string& source = "csic-text") {
    std::vector<PayloadSample> out;
    if (raw.empty()) return out;

    std::string_view text(reinterpret_cast<const char*>(raw.data()), raw.size());

    // split into lines, remembering byte offsets for error reporting
    struct Line {
        std::string_view text;
        std::size_t offset;
    };
    std::vector<Line> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::size_t end = (eol == std::string_view::npos) ? text.size() : eol;
        std::string_view ln = text.substr(pos, end - pos);
        if (!ln.empty() && ln.back() == '\r') ln.remove_suffix(1);
        lines.push_back({ln, pos});
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }

    // locate record starts
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (detail::is_request_line(lines[i].text)) starts.push_back(i);

    // anything non-blank before the first request line is a malformed boundary
    std::size_t first = starts.empty() ? lines.size() : starts[0];
    for (std::size_t i = 0; i < first; ++i)
        if (!lines[i].text.empty())
            throw DataError("http-text: malformed record boundary at byte offset " + std::to_string(lines[i].offset));

    for (std::size_t r = 0; r < starts.size(); ++r) {
        std::size_t begin = starts[r];
        std::size_t end = (r + 1 < starts.size()) ? starts[r + 1] : lines.size();

        // header block runs until the first blank line
        std::size_t blank = end;
        for (std::size_t i = begin + 1; i < end; ++i) {
            if (lines[i].text.empty()) {
                blank = i;
                break;
            }
        }

        // body: everything after the blank line, trailing blank lines trimmed
        std::size_t body_begin = (blank < end) ? blank + 1 : end;
        std::size_t body_end = end;
        while (body_end > body_begin && lines[body_end - 1].text.empty()) --body_end;

        PayloadSample s;
        s.id = std::int64_t(out.size());
        s.label = label;
        s.source = source;

        std::string payload;
        if (strip_headers) {
            payload.assign(lines[begin].text);
            for (std::size_t i = body_begin; i < body_end; ++i) {
                payload += '\n';
                payload.append(lines[i].text);
            }
        } else {
            for (std::size_t i = begin; i < end; ++i) {
                if (i > begin) payload += '\n';
                payload.append(lines[i].text);
            }
            while (!payload.empty() && payload.back() == '\n') payload.pop_back();
        }
        s.payload = to_bytes(payload);
        out.push_back(std::move(s));
    }
    return out;
}

// Canonical interchange format: one record per line, "<label>\t<base64 payload>".
inline std::vector<PayloadSample> parse_labeled_lines(const Bytes& raw, const std::string& source = "labeled-lines") {
    std::vector<PayloadSample> out;
    std::string_view text(reinterpret_cast<const char*>(raw.data()), raw.size());
    std::size_t pos = 0;
    std::size_t lineno = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::size_t end = (eol == std::string_view::npos) ? text.size() : eol;
        std::string_view ln = text.substr(pos, end - pos);
        if (!ln.empty() && ln.back() == '\r') ln.remove_suffix(1);
        ++lineno;
        if (!ln.empty()) {
            std::size_t tab = ln.find('\t');
            if (tab == std::string_view::npos)
                throw DataError("labeled-lines: missing tab at line " + std::to_string(lineno));
            std::string_view lab = ln.substr(0, tab);
            if (lab != "0" && lab != "1")
                throw DataError("labeled-lines: label not in {0,1} at line " + std::to_string(lineno));
            PayloadSample s;
            s.id = std::int64_t(out.size());
            s.label = (lab == "1") ? 1 : 0;
            s.source = source;
            try {
                s.payload = base64::decode(ln.substr(tab + 1));
            } catch (const DataError& e) {
                throw DataError(std::string(e.what()) + " at line " + std::to_string(lineno));
            }
            out.push_back(std::move(s));
        }
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    return out;
}

inline Bytes serialize_labeled_lines(const std::vector<PayloadSample>& samples) {
    std::string out;
    for (const auto& s : samples) {
        out += char('0' + s.label);
        out += '\t';
        out += base64::encode(s.payload);
        out += '\n';
    }
    return to_bytes(out);
}

struct PcapExtractResult {
    std::vector<PayloadSample> samples;
    std::size_t skipped = 0;  // empty payload, non-IPv4, unsupported link type
};

// Classic PCAP (both magic endiannesses), Ethernet + IPv4, TCP/UDP payloads.
// One sample per packet with a non-empty transport payload; no reassembly.
inline PcapExtractResult extract_pcap_payloads(const Bytes& raw, int default_label,
                                               const std::string& source = "pcap") {
    PcapExtractResult res;
    if (raw.size() < 24) throw DataError("pcap: file shorter than global header");

    auto rd32 = [&raw](std::size_t off, bool swap) -> std::uint32_t {
        std::uint32_t v;
        std::memcpy(&v, raw.data() + off, 4);
        if (swap) v = __builtin_bswap32(v);
        return v;
    };
    auto rd16 = [&raw](std::size_t off, bool swap) -> std::uint16_t {
        std::uint16_t v;
        std::memcpy(&v, raw.data() + off, 2);
        if (swap) v = std::uint16_t((v >> 8) | (v << 8));
        return v;
    };

    std::uint32_t magic = rd32(0, false);
    bool swap;
    if (magic == 0xa1b2c3d4u)
        swap = false;
    else if (magic == 0xd4c3b2a1u)
        swap = true;
    else
        throw DataError("pcap: bad magic number");

    std::uint32_t linktype = rd32(20, swap);
    constexpr std::uint32_t kLinkEthernet = 1;

    std::size_t off = 24;
    std::size_t index = 0;
    while (off < raw.size()) {
        if (off + 16 > raw.size())
            throw DataError("pcap: truncated record header at record " + std::to_string(index));
        std::uint32_t caplen = rd32(off + 8, swap);
        off += 16;
        if (off + caplen > raw.size())
            throw DataError("pcap: truncated record data at record " + std::to_string(index));
        std::size_t pkt = off;
        off += caplen;
        ++index;

        if (linktype != kLinkEthernet || caplen < 14) {
            ++res.skipped;
            continue;
        }
        std::uint16_t ethertype = std::uint16_t((raw[pkt + 12] << 8) | raw[pkt + 13]);
        if (ethertype != 0x0800) {  // IPv4 only
            ++res.skipped;
            continue;
        }
        std::size_t ip = pkt + 14;
        if (ip + 20 > pkt + caplen || (raw[ip] >> 4) != 4) {
            ++res.skipped;
            continue;
        }
        std::size_t ihl = std::size_t(raw[ip] & 0x0f) * 4;
        std::uint16_t total_len = std::uint16_t((raw[ip + 2] << 8) | raw[ip + 3]);
        std::uint8_t proto = raw[ip + 9];
        if (ihl < 20 || ip + total_len > pkt + caplen || total_len < ihl) {
            ++res.skipped;
            continue;
        }
        std::size_t l4 = ip + ihl;
        std::size_t l4_len = total_len - ihl;
        std::size_t payload_off = 0;
        if (proto == 6) {  // TCP
            if (l4_len < 20) {
                ++res.skipped;
                continue;
            }
            std::size_t doff = std::size_t(raw[l4 + 12] >> 4) * 4;
            if (doff < 20 || doff > l4_len) {
                ++res.skipped;
                continue;
            }
            payload_off = doff;
        } else if (proto == 17) {  // UDP
            if (l4_len < 8) {
                ++res.skipped;
                continue;
            }
            payload_off = 8;
        } else {
            ++res.skipped;
            continue;
        }
        std::size_t plen = l4_len - payload_off;
        if (plen == 0) {
            ++res.skipped;
            continue;
        }
        PayloadSample s;
        s.id = std::int64_t(res.samples.size());
        s.label = default_label;
        s.source = source;
        s.payload.assign(raw.begin() + std::ptrdiff_t(l4 + payload_off),
                         raw.begin() + std::ptrdiff_t(l4 + payload_off + plen));
        res.samples.push_back(std::move(s));
    }
    return res;
}

// Seeded 70/10/20 split; remainders go to train.
inline DatasetSplit split_dataset(const std::vector<PayloadSample>& samples, std::uint64_t seed) {
    if (samples.size() < 10) throw DataError("split: need at least 10 samples");

    std::vector<std::int64_t> ids;
    ids.reserve(samples.size());
    for (const auto& s : samples) ids.push_back(s.id);

    Rng rng(mix_seed(seed, 0x73706c6974ULL));  // "split"
    rng.shuffle(ids);

    std::size_t n = ids.size();
    std::size_t n_val = n / 10;
    std::size_t n_test = n / 5;
    std::size_t n_train = n - n_val - n_test;

    DatasetSplit split;
    split.seed = seed;
    split.train.assign(ids.begin(), ids.begin() + std::ptrdiff_t(n_train));
    split.validation.assign(ids.begin() + std::ptrdiff_t(n_train), ids.begin() + std::ptrdiff_t(n_train + n_val));
    split.test.assign(ids.begin() + std::ptrdiff_t(n_train + n_val), ids.end());
    return split;
}

}  // namespace paysent
