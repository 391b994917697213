#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "paysent/common.hpp"
#include "paysent/ingest.hpp"

namespace paysent {

struct BlockConfig {
    std::size_t block_length = 3;  // L
    std::size_t stride = 1;        // S
    std::size_t dict_size = 15000; // K

    void validate() const {
        if (block_length < 1 || stride < 1 || dict_size < 1)
            throw UsageError("block config: L, S, K must be strictly positive");
    }
};

struct TokenSequence {
    std::vector<std::int32_t> tokens;  // ids >= 1; PAD (0) never stored here
    std::int64_t origin = -1;
};

namespace detail {

// blocks up to 8 bytes pack into a uint64 key; longer ones fall back to strings
inline bool packable(std::size_t len) { return len <= 8; }

inline std::uint64_t pack_block(const std::uint8_t* p, std::size_t len) {
    // big-endian pack so that numeric order equals lexicographic byte order
    std::uint64_t k = 0;
    for (std::size_t i = 0; i < len; ++i) k = (k << 8) | p[i];
    return k;
}

}  // namespace detail

// Top-K frequency dictionary over sliding blocks. Token ids are 1..|entries|
// in rank order (count desc, then lexicographic byte order); id 0 is PAD.
class BlockDictionary {
public:
    BlockDictionary() = default;

    const BlockConfig& config() const { return config_; }
    std::size_t size() const { return blocks_.size(); }
    std::uint64_t corpus_fingerprint() const { return corpus_fp_; }

    const Bytes& block(std::size_t token_id) const { return blocks_.at(token_id - 1); }
    std::uint64_t count(std::size_t token_id) const { return counts_.at(token_id - 1); }

    // token id for a block, or 0 if out of dictionary
    std::int32_t lookup(const std::uint8_t* p, std::size_t len) const {
        if (len != config_.block_length) return 0;
        if (detail::packable(len)) {
            auto it = packed_index_.find(detail::pack_block(p, len));
            return it == packed_index_.end() ? 0 : it->second;
        }
        auto it = string_index_.find(std::string(reinterpret_cast<const char*>(p), len));
        return it == string_index_.end() ? 0 : it->second;
    }

    static BlockDictionary fit(const std::vector<PayloadSample>& corpus, const BlockConfig& config);

    void save(const std::string& path) const;
    static BlockDictionary load(const std::string& path);

    // fingerprint over config + ranked entries; ties checkpoints to the
    // exact tokenization they were trained with
    std::uint64_t fingerprint() const {
        std::uint64_t h = fnv1a(&config_.block_length, sizeof(config_.block_length));
        h = fnv1a(&config_.stride, sizeof(config_.stride), h);
        h = fnv1a(&config_.dict_size, sizeof(config_.dict_size), h);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            h = fnv1a(blocks_[i].data(), blocks_[i].size(), h);
            h = fnv1a(&counts_[i], sizeof(counts_[i]), h);
        }
        return h;
    }

private:
    void build_index() {
        packed_index_.clear();
        string_index_.clear();
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            if (detail::packable(blocks_[i].size()))
                packed_index_[detail::pack_block(blocks_[i].data(), blocks_[i].size())] = std::int32_t(i + 1);
            else
                string_index_[to_string(blocks_[i])] = std::int32_t(i + 1);
        }
    }

    BlockConfig config_;
    std::vector<Bytes> blocks_;          // rank order, index = token id - 1
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::uint64_t, std::int32_t> packed_index_;
    std::unordered_map<std::string, std::int32_t> string_index_;
    std::uint64_t corpus_fp_ = 0;
};

// blocks are payload[i .. i+L) for i = 0, S, 2S, ... while i+L <= len
inline std::vector<Bytes> extract_blocks(const Bytes& payload, const BlockConfig& config) {
    config.validate();
    std::vector<Bytes> out;
    std::size_t L = config.block_length, S = config.stride;
    if (payload.size() < L) return out;
    out.reserve((payload.size() - L) / S + 1);
    for (std::size_t i = 0; i + L <= payload.size(); i += S)
        out.emplace_back(payload.begin() + std::ptrdiff_t(i), payload.begin() + std::ptrdiff_t(i + L));
    return out;
}

inline BlockDictionary BlockDictionary::fit(const std::vector<PayloadSample>& corpus, const BlockConfig& config) {
    config.validate();
    if (corpus.empty()) throw DataError("fit_dictionary: empty corpus");

    BlockDictionary dict;
    dict.config_ = config;

    std::uint64_t fp = 0xcbf29ce484222325ULL;
    for (const auto& s : corpus) {
        fp = fnv1a(s.payload, fp);
        std::uint8_t lab = std::uint8_t(s.label);
        fp = fnv1a(&lab, 1, fp);
    }
    dict.corpus_fp_ = fp;

    std::size_t L = config.block_length, S = config.stride;
    std::uint64_t total = 0;

    if (detail::packable(L)) {
        std::unordered_map<std::uint64_t, std::uint64_t> counts;
        for (const auto& s : corpus) {
            if (s.payload.size() < L) continue;
            for (std::size_t i = 0; i + L <= s.payload.size(); i += S) {
                ++counts[detail::pack_block(s.payload.data() + i, L)];
                ++total;
            }
        }
        if (total == 0) throw DataError("fit_dictionary: corpus yields zero blocks");

        std::vector<std::pair<std::uint64_t, std::uint64_t>> ranked(counts.begin(), counts.end());
        // count desc, then lexicographic byte order asc (packed big-endian preserves it)
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (ranked.size() > config.dict_size) ranked.resize(config.dict_size);

        for (const auto& [key, cnt] : ranked) {
            Bytes b(L);
            for (std::size_t i = 0; i < L; ++i) b[i] = std::uint8_t(key >> (8 * (L - 1 - i)));
            dict.blocks_.push_back(std::move(b));
            dict.counts_.push_back(cnt);
        }
    } else {
        std::unordered_map<std::string, std::uint64_t> counts;
        for (const auto& s : corpus) {
            if (s.payload.size() < L) continue;
            for (std::size_t i = 0; i + L <= s.payload.size(); i += S) {
                ++counts[std::string(reinterpret_cast<const char*>(s.payload.data() + i), L)];
                ++total;
            }
        }
        if (total == 0) throw DataError("fit_dictionary: corpus yields zero blocks");

        std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (ranked.size() > config.dict_size) ranked.resize(config.dict_size);

        for (const auto& [key, cnt] : ranked) {
            dict.blocks_.push_back(to_bytes(key));
            dict.counts_.push_back(cnt);
        }
    }

    dict.build_index();
    return dict;
}

// extract, drop out-of-dictionary blocks, map survivors in original order
inline TokenSequence tokenize(const Bytes& payload, const BlockDictionary& dict, std::int64_t origin = -1) {
    if (dict.size() == 0) throw DataError("tokenize: empty dictionary");
    TokenSequence seq;
    seq.origin = origin;
    std::size_t L = dict.config().block_length, S = dict.config().stride;
    if (payload.size() < L) return seq;
    seq.tokens.reserve((payload.size() - L) / S + 1);
    for (std::size_t i = 0; i + L <= payload.size(); i += S) {
        std::int32_t id = dict.lookup(payload.data() + i, L);
        if (id != 0) seq.tokens.push_back(id);
    }
    return seq;
}

inline void BlockDictionary::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("dictionary: cannot open " + path + " for writing");
    f << "paysent-dict v1 L=" << config_.block_length << " S=" << config_.stride << " K=" << config_.dict_size
      << " corpus=" << corpus_fp_ << "\n";
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        f << base64::encode(blocks_[i]) << '\t' << counts_[i] << '\n';
    if (!f) throw DataError("dictionary: write failed for " + path);
}

inline BlockDictionary BlockDictionary::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("dictionary: cannot open " + path);
    std::string header;
    std::getline(f, header);
    BlockDictionary dict;
    {
        std::istringstream hs(header);
        std::string tag, ver, fld;
        hs >> tag >> ver;
        if (tag != "paysent-dict" || ver != "v1") throw DataError("dictionary: bad header in " + path);
        while (hs >> fld) {
            auto eq = fld.find('=');
            if (eq == std::string::npos) throw DataError("dictionary: bad header field in " + path);
            std::string key = fld.substr(0, eq);
            std::uint64_t val = std::stoull(fld.substr(eq + 1));
            if (key == "L") dict.config_.block_length = val;
            else if (key == "S") dict.config_.stride = val;
            else if (key == "K") dict.config_.dict_size = val;
            else if (key == "corpus") dict.corpus_fp_ = val;
        }
    }
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("dictionary: missing tab at line " + std::to_string(lineno));
        dict.blocks_.push_back(base64::decode(std::string_view(line).substr(0, tab)));
        dict.counts_.push_back(std::stoull(line.substr(tab + 1)));
        if (dict.blocks_.back().size() != dict.config_.block_length)
            throw DataError("dictionary: block length mismatch at line " + std::to_string(lineno));
    }
    if (dict.blocks_.empty()) throw DataError("dictionary: no entries in " + path);
    dict.build_index();
    return dict;
}

}  // namespace paysent
