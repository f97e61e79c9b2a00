#include "vividforge/archive.hpp"

#include "vividforge/errors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <unordered_set>

namespace vividforge {

namespace {

constexpr char kMagic[4] = {'V', 'V', 'T', 'F'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw IoError("archive truncated");
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

void check_entry(const TensorEntry& e) {
    if (e.element_count() != e.data.size())
        throw ValidationError("entry '" + e.name + "': dims do not match data length");
    if (std::any_of(e.dims.begin(), e.dims.end(), [](std::uint32_t d) { return d == 0; }))
        throw ValidationError("entry '" + e.name + "': zero dimension");
}

void check_unique(const std::vector<TensorEntry>& entries) {
    std::unordered_set<std::string> seen;
    for (const auto& e : entries)
        if (!seen.insert(e.name).second) throw ValidationError("duplicate archive entry '" + e.name + "'");
}

} // namespace

std::size_t TensorEntry::element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

void TensorArchive::add(TensorEntry entry) {
    check_entry(entry);
    if (contains(entry.name)) throw ValidationError("duplicate archive entry '" + entry.name + "'");
    entries_.push_back(std::move(entry));
}

void TensorArchive::add(std::string name, std::vector<std::uint32_t> dims, std::vector<float> data) {
    add(TensorEntry{std::move(name), std::move(dims), std::move(data)});
}

void TensorArchive::add(std::string name, std::vector<std::uint32_t> dims, const std::vector<double>& data) {
    std::vector<float> f(data.begin(), data.end());
    add(TensorEntry{std::move(name), std::move(dims), std::move(f)});
}

bool TensorArchive::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

const TensorEntry& TensorArchive::get(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw ValidationError("archive has no entry '" + name + "'");
}

std::vector<double> TensorArchive::get_doubles(const std::string& name) const {
    const auto& e = get(name);
    return {e.data.begin(), e.data.end()};
}

std::vector<std::string> TensorArchive::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
        if (e.name.starts_with(prefix)) out.push_back(e.name);
    return out;
}

std::vector<std::uint8_t> TensorArchive::serialize() const {
    check_unique(entries_);
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        check_entry(e);
        put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
        for (auto d : e.dims) put_u32(out, d);
        for (float v : e.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

TensorArchive TensorArchive::deserialize(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a VVTF archive");
    if (r.u32() != kVersion) throw FormatError("unsupported archive version");
    const std::uint32_t count = r.u32();
    TensorArchive a;
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorEntry e;
        e.name.resize(r.u32());
        r.raw(e.name.data(), e.name.size());
        e.dims.resize(r.u32());
        for (auto& d : e.dims) d = r.u32();
        e.data.resize(e.element_count());
        for (auto& v : e.data) v = std::bit_cast<float>(r.u32());
        try {
            a.add(std::move(e));
        } catch (const ValidationError& err) {
            throw FormatError(err.what());
        }
    }
    if (!r.at_end()) throw FormatError("trailing bytes after archive entries");
    return a;
}

void TensorArchive::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

void save_archive(const TensorArchive& archive, const std::filesystem::path& path) { archive.save(path); }
void save_archive(const std::vector<TensorEntry>& entries, const std::filesystem::path& path) {
    check_unique(entries);
    TensorArchive a;
    for (const auto& e : entries) a.add(e);
    a.save(path);
}

TensorArchive load_archive(const std::filesystem::path& path) { return TensorArchive::load(path); }

} // namespace vividforge
