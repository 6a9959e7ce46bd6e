#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <zlib.h>

#include "soupsr/errors.hpp"

namespace soupsr {

// Minimal ZIP archive support, store method only (no compression). This is
// enough for checkpoint archives: a JSON manifest plus raw tensor blobs.
// Timestamps are pinned to a constant so identical content yields identical
// bytes.

namespace zipdetail {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint16_t kDosTime = 0;      // 00:00:00
constexpr std::uint16_t kDosDate = 20513;  // 2020-01-01

inline void put16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint16_t get16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t get32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace zipdetail

/// Writes a store-only ZIP archive. Entries are written in add() order;
/// finish() (or the destructor) appends the central directory.
class ZipWriter {
public:
    explicit ZipWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw io_error("cannot open archive for writing: " + path);
    }

    ZipWriter(const ZipWriter&) = delete;
    ZipWriter& operator=(const ZipWriter&) = delete;

    ~ZipWriter() {
        if (!finished_) {
            try { finish(); } catch (...) {}
        }
    }

    void add(const std::string& name, const void* data, std::size_t size) {
        using namespace zipdetail;
        if (finished_) throw io_error("archive already finished: " + path_);
        std::uint32_t crc =
            static_cast<std::uint32_t>(::crc32(0L, static_cast<const Bytef*>(data),
                                               static_cast<uInt>(size)));
        Entry e;
        e.name = name;
        e.crc = crc;
        e.size = static_cast<std::uint32_t>(size);
        e.offset = static_cast<std::uint32_t>(out_.tellp());

        std::string hdr;
        put32(hdr, kLocalSig);
        put16(hdr, 20);        // version needed
        put16(hdr, 0);         // flags
        put16(hdr, 0);         // method: store
        put16(hdr, kDosTime);
        put16(hdr, kDosDate);
        put32(hdr, e.crc);
        put32(hdr, e.size);    // compressed == uncompressed
        put32(hdr, e.size);
        put16(hdr, static_cast<std::uint16_t>(name.size()));
        put16(hdr, 0);         // extra len
        out_.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
        out_.write(name.data(), static_cast<std::streamsize>(name.size()));
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out_) throw io_error("write failed: " + path_);
        entries_.push_back(std::move(e));
    }

    void add(const std::string& name, const std::string& data) {
        add(name, data.data(), data.size());
    }

    void finish() {
        using namespace zipdetail;
        if (finished_) return;
        std::uint32_t cd_start = static_cast<std::uint32_t>(out_.tellp());
        std::string cd;
        for (const Entry& e : entries_) {
            put32(cd, kCentralSig);
            put16(cd, 20);  // version made by
            put16(cd, 20);  // version needed
            put16(cd, 0);   // flags
            put16(cd, 0);   // method
            put16(cd, kDosTime);
            put16(cd, kDosDate);
            put32(cd, e.crc);
            put32(cd, e.size);
            put32(cd, e.size);
            put16(cd, static_cast<std::uint16_t>(e.name.size()));
            put16(cd, 0);  // extra
            put16(cd, 0);  // comment
            put16(cd, 0);  // disk
            put16(cd, 0);  // internal attrs
            put32(cd, 0);  // external attrs
            put32(cd, e.offset);
            cd += e.name;
        }
        out_.write(cd.data(), static_cast<std::streamsize>(cd.size()));

        std::string end;
        put32(end, kEndSig);
        put16(end, 0);
        put16(end, 0);
        put16(end, static_cast<std::uint16_t>(entries_.size()));
        put16(end, static_cast<std::uint16_t>(entries_.size()));
        put32(end, static_cast<std::uint32_t>(cd.size()));
        put32(end, cd_start);
        put16(end, 0);  // comment len
        out_.write(end.data(), static_cast<std::streamsize>(end.size()));
        out_.flush();
        if (!out_) throw io_error("write failed: " + path_);
        finished_ = true;
    }

private:
    struct Entry {
        std::string name;
        std::uint32_t crc = 0;
        std::uint32_t size = 0;
        std::uint32_t offset = 0;
    };

    std::ofstream out_;
    std::string path_;
    std::vector<Entry> entries_;
    bool finished_ = false;
};

/// Reads store-only ZIP archives written by ZipWriter (and by other tools,
/// as long as entries are uncompressed). CRCs are verified on read.
class ZipReader {
public:
    explicit ZipReader(const std::string& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw io_error("cannot open archive: " + path);
        in.seekg(0, std::ios::end);
        std::streamoff fsize = in.tellg();
        if (fsize < 22) throw corruption_error("archive truncated: " + path);
        raw_.resize(static_cast<std::size_t>(fsize));
        in.seekg(0);
        in.read(raw_.data(), fsize);
        if (!in) throw io_error("read failed: " + path);
        parse();
    }

    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [k, v] : entries_) out.push_back(k);
        return out;
    }

    /// Returns the entry payload, validating its CRC.
    std::string read(const std::string& name) const {
        using namespace zipdetail;
        auto it = entries_.find(name);
        if (it == entries_.end()) throw corruption_error("archive entry missing: " + name);
        const Entry& e = it->second;
        if (e.data_offset + e.size > raw_.size())
            throw corruption_error("archive truncated at entry: " + name);
        std::string payload(raw_.data() + e.data_offset, e.size);
        std::uint32_t crc = static_cast<std::uint32_t>(
            ::crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
                    static_cast<uInt>(payload.size())));
        if (crc != e.crc) throw corruption_error("CRC mismatch in entry: " + name);
        return payload;
    }

private:
    struct Entry {
        std::uint32_t crc = 0;
        std::uint32_t size = 0;
        std::size_t data_offset = 0;
    };

    void parse() {
        using namespace zipdetail;
        const auto* bytes = reinterpret_cast<const unsigned char*>(raw_.data());
        // locate end-of-central-directory; scan backwards over a possible comment
        std::size_t end_pos = std::string::npos;
        std::size_t lo = raw_.size() >= 22 + 65535 ? raw_.size() - 22 - 65535 : 0;
        for (std::size_t i = raw_.size() - 22 + 1; i-- > lo;) {
            if (get32(bytes + i) == kEndSig) {
                end_pos = i;
                break;
            }
        }
        if (end_pos == std::string::npos)
            throw corruption_error("no end-of-central-directory record: " + path_);
        std::uint16_t count = get16(bytes + end_pos + 10);
        std::uint32_t cd_size = get32(bytes + end_pos + 12);
        std::uint32_t cd_off = get32(bytes + end_pos + 16);
        if (static_cast<std::size_t>(cd_off) + cd_size > raw_.size())
            throw corruption_error("central directory out of bounds: " + path_);

        std::size_t p = cd_off;
        for (std::uint16_t i = 0; i < count; ++i) {
            if (p + 46 > raw_.size() || get32(bytes + p) != kCentralSig)
                throw corruption_error("bad central directory entry: " + path_);
            std::uint16_t method = get16(bytes + p + 10);
            std::uint32_t crc = get32(bytes + p + 16);
            std::uint32_t csize = get32(bytes + p + 20);
            std::uint32_t usize = get32(bytes + p + 24);
            std::uint16_t nlen = get16(bytes + p + 28);
            std::uint16_t xlen = get16(bytes + p + 30);
            std::uint16_t clen = get16(bytes + p + 32);
            std::uint32_t lho = get32(bytes + p + 42);
            if (method != 0 || csize != usize)
                throw unsupported_error("compressed archive entries are not supported: " + path_);
            if (p + 46 + nlen > raw_.size())
                throw corruption_error("bad central directory entry: " + path_);
            std::string name(raw_.data() + p + 46, nlen);

            // resolve the data offset through the local header
            if (static_cast<std::size_t>(lho) + 30 > raw_.size() || get32(bytes + lho) != kLocalSig)
                throw corruption_error("bad local header: " + path_);
            std::uint16_t lnlen = get16(bytes + lho + 26);
            std::uint16_t lxlen = get16(bytes + lho + 28);
            Entry e;
            e.crc = crc;
            e.size = usize;
            e.data_offset = static_cast<std::size_t>(lho) + 30 + lnlen + lxlen;
            if (e.data_offset + e.size > raw_.size())
                throw corruption_error("archive truncated at entry: " + name);
            entries_.emplace(std::move(name), e);
            p += 46u + nlen + xlen + clen;
        }
    }

    std::string path_;
    std::string raw_;
    std::map<std::string, Entry> entries_;
};

} // namespace soupsr
