#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vividforge {

struct TensorEntry {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t element_count() const;
};

/// Ordered set of named f32 tensors persisted in the .vvt layout:
///
///   "VVTF" | u32 version=1 | u32 count |
///   count x { u32 name_len | name | u32 ndim | u32 dims[ndim] | f32 payload }
///
/// All integers and floats little-endian.
class TensorArchive {
public:
    static constexpr std::uint32_t kVersion = 1;

    void add(TensorEntry entry);
    void add(std::string name, std::vector<std::uint32_t> dims, std::vector<float> data);
    void add(std::string name, std::vector<std::uint32_t> dims, const std::vector<double>& data);

    bool contains(const std::string& name) const;
    const TensorEntry& get(const std::string& name) const;
    std::vector<double> get_doubles(const std::string& name) const;

    const std::vector<TensorEntry>& entries() const { return entries_; }
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;
    std::size_t size() const { return entries_.size(); }

    std::vector<std::uint8_t> serialize() const;
    static TensorArchive deserialize(const std::vector<std::uint8_t>& bytes);

    void save(const std::filesystem::path& path) const;
    static TensorArchive load(const std::filesystem::path& path);

private:
    std::vector<TensorEntry> entries_;
};

// Free-function forms.
void save_archive(const TensorArchive& archive, const std::filesystem::path& path);
/// Throws ValidationError on duplicate names or dims/data mismatch.
void save_archive(const std::vector<TensorEntry>& entries, const std::filesystem::path& path);
TensorArchive load_archive(const std::filesystem::path& path);

} // namespace vividforge
