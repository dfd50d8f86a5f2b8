#include "mlwb/codegen/bundle.hpp"

#include <zlib.h>

#include <algorithm>

#include "mlwb/codegen/python.hpp"
#include "mlwb/data/csv.hpp"
#include "mlwb/model/model_file.hpp"

namespace mlwb {

namespace {

// Stored entries, no data descriptors, DOS timestamp 1980-01-01 00:00.
constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint16_t kVersion = 20;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;

void put16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
    put16(out, static_cast<std::uint16_t>(v & 0xffff));
    put16(out, static_cast<std::uint16_t>(v >> 16));
}

std::uint32_t crc_of(std::string_view data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; entries here are far below 4 GiB.
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size()));
    return static_cast<std::uint32_t>(crc);
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint16_t u16(std::size_t at) const {
        need(at, 2);
        return static_cast<std::uint16_t>(byte(at) | (byte(at + 1) << 8));
    }
    std::uint32_t u32(std::size_t at) const {
        return static_cast<std::uint32_t>(u16(at)) | (static_cast<std::uint32_t>(u16(at + 2)) << 16);
    }
    std::string_view slice(std::size_t at, std::size_t n) const {
        need(at, n);
        return bytes_.substr(at, n);
    }
    std::size_t size() const { return bytes_.size(); }

private:
    unsigned byte(std::size_t at) const { return static_cast<unsigned char>(bytes_[at]); }
    void need(std::size_t at, std::size_t n) const {
        if (at > bytes_.size() || n > bytes_.size() - at) {
            throw ArchiveError("archive truncated");
        }
    }

    std::string_view bytes_;
};

}  // namespace

std::string write_zip(std::vector<ArchiveEntry> entries) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].path.empty()) {
            throw ArchiveError("archive entry with empty path");
        }
        if (i > 0 && entries[i].path == entries[i - 1].path) {
            throw ArchiveError("duplicate archive entry: " + entries[i].path);
        }
    }
    std::string out;
    std::string central;
    for (const auto& e : entries) {
        const auto offset = static_cast<std::uint32_t>(out.size());
        const std::uint32_t crc = crc_of(e.data);
        const auto size = static_cast<std::uint32_t>(e.data.size());
        const auto name_len = static_cast<std::uint16_t>(e.path.size());

        put32(out, kLocalSig);
        put16(out, kVersion);
        put16(out, 0);  // flags
        put16(out, 0);  // method: stored
        put16(out, 0);  // time
        put16(out, kDosDate);
        put32(out, crc);
        put32(out, size);
        put32(out, size);
        put16(out, name_len);
        put16(out, 0);  // extra
        out += e.path;
        out += e.data;

        put32(central, kCentralSig);
        put16(central, kVersion);
        put16(central, kVersion);
        put16(central, 0);
        put16(central, 0);
        put16(central, 0);
        put16(central, kDosDate);
        put32(central, crc);
        put32(central, size);
        put32(central, size);
        put16(central, name_len);
        put16(central, 0);  // extra
        put16(central, 0);  // comment
        put16(central, 0);  // disk
        put16(central, 0);  // internal attributes
        put32(central, 0);  // external attributes
        put32(central, offset);
        central += e.path;
    }
    const auto central_offset = static_cast<std::uint32_t>(out.size());
    out += central;
    put32(out, kEndSig);
    put16(out, 0);
    put16(out, 0);
    put16(out, static_cast<std::uint16_t>(entries.size()));
    put16(out, static_cast<std::uint16_t>(entries.size()));
    put32(out, static_cast<std::uint32_t>(central.size()));
    put32(out, central_offset);
    put16(out, 0);
    return out;
}

std::vector<ArchiveEntry> read_zip(std::string_view bytes) {
    const Reader r(bytes);
    if (r.size() < 22) {
        throw ArchiveError("archive truncated");
    }
    // Search backwards for the end record (it may be followed by a comment).
    std::size_t end = r.size() - 22;
    while (r.u32(end) != kEndSig) {
        if (end == 0) {
            throw ArchiveError("no end-of-archive record");
        }
        --end;
    }
    const std::size_t count = r.u16(end + 10);
    std::size_t at = r.u32(end + 16);
    std::vector<ArchiveEntry> entries;
    for (std::size_t i = 0; i < count; ++i) {
        if (r.u32(at) != kCentralSig) {
            throw ArchiveError("bad central directory record");
        }
        const std::uint16_t method = r.u16(at + 10);
        const std::uint32_t crc = r.u32(at + 16);
        const std::uint32_t size = r.u32(at + 20);
        const std::size_t name_len = r.u16(at + 28);
        const std::size_t extra_len = r.u16(at + 30);
        const std::size_t comment_len = r.u16(at + 32);
        const std::size_t local = r.u32(at + 42);
        std::string path(r.slice(at + 46, name_len));
        if (method != 0) {
            throw ArchiveError("entry " + path + " is compressed; only stored entries are supported");
        }
        if (r.u32(local) != kLocalSig) {
            throw ArchiveError("bad local header for " + path);
        }
        const std::size_t data_at = local + 30 + r.u16(local + 26) + r.u16(local + 28);
        std::string data(r.slice(data_at, size));
        if (crc_of(data) != crc) {
            throw ArchiveError("checksum mismatch in " + path);
        }
        entries.push_back({std::move(path), std::move(data)});
        at += 46 + name_len + extra_len + comment_len;
    }
    return entries;
}

std::string export_bundle(const CompiledModel& model, const std::optional<Dataset>& dataset,
                          const TrainConfig& config) {
    const GeneratedProgram program = generate_python(model.spec, config);
    std::vector<ArchiveEntry> entries{
        {"model.json", save_model(model)},
        {"train.py", program.source},
        {"README.txt", program.instructions},
    };
    if (dataset) {
        if (input_shape(model.spec.input).size() == 1) {
            entries.push_back({"dataset.csv", serialize_csv(*dataset)});
        } else {
            entries.push_back({"dataset.json", to_json(*dataset).dump(1) + "\n"});
        }
    }
    return write_zip(std::move(entries));
}

}  // namespace mlwb
