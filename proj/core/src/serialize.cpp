#include "lori/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace lori {

namespace {

using nlohmann::json;

constexpr std::array<char, 4> kAdapterMagic = {'L', 'O', 'R', 'I'};
constexpr std::array<char, 4> kModelMagic = {'L', 'O', 'R', 'M'};
// Caps the declared metadata length so a corrupt header cannot trigger a
// huge allocation.
constexpr std::uint32_t kMaxMetadataLen = 1u << 20;

std::uint32_t crc_table_entry(std::uint32_t i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) {
        c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
    }
    return c;
}

const std::array<std::uint32_t, 256>& crc_table() {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) t[i] = crc_table_entry(i);
        return t;
    }();
    return table;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
    put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw FileFormatError("cannot open " + path.string());
        }
        bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        if (remaining() < n) {
            throw ChecksumError(std::string("file truncated while reading ") + what);
        }
        std::span<const std::uint8_t> s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }

    std::uint32_t take_u32(const char* what) {
        auto s = take(4, what);
        return static_cast<std::uint32_t>(s[0]) | (static_cast<std::uint32_t>(s[1]) << 8) |
               (static_cast<std::uint32_t>(s[2]) << 16) |
               (static_cast<std::uint32_t>(s[3]) << 24);
    }

private:
    std::vector<std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void append_matrix_f32(std::vector<std::uint8_t>& payload, const Matrix& m) {
    for (std::size_t k = 0; k < m.size(); ++k) {
        put_f32(payload, static_cast<float>(m[k]));
    }
}

Matrix read_matrix_f32(std::span<const std::uint8_t> bytes, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t k = 0; k < m.size(); ++k) {
        const std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * k]) |
                                (static_cast<std::uint32_t>(bytes[4 * k + 1]) << 8) |
                                (static_cast<std::uint32_t>(bytes[4 * k + 2]) << 16) |
                                (static_cast<std::uint32_t>(bytes[4 * k + 3]) << 24);
        m[k] = static_cast<double>(std::bit_cast<float>(u));
    }
    return m;
}

void check_magic(std::span<const std::uint8_t> got, const std::array<char, 4>& want) {
    for (std::size_t i = 0; i < 4; ++i) {
        if (static_cast<char>(got[i]) != want[i]) {
            throw BadMagicError("bad magic bytes: expected '" +
                                std::string(want.begin(), want.end()) + "'");
        }
    }
}

void check_version(std::uint32_t got, std::uint32_t supported) {
    if (got != supported) {
        throw UnsupportedVersionError("unsupported format version " + std::to_string(got) +
                                      " (this build reads version " +
                                      std::to_string(supported) + ")");
    }
}

void write_file(const std::filesystem::path& path, const std::array<char, 4>& magic,
                std::uint32_t version, const std::string& metadata,
                const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> out;
    out.reserve(12 + metadata.size() + payload.size() + 4);
    for (char c : magic) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, version);
    put_u32(out, static_cast<std::uint32_t>(metadata.size()));
    out.insert(out.end(), metadata.begin(), metadata.end());
    out.insert(out.end(), payload.begin(), payload.end());
    put_u32(out, crc32(payload));

    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FileFormatError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

json parse_metadata(std::span<const std::uint8_t> bytes) {
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw FileFormatError(std::string("invalid metadata JSON: ") + e.what());
    }
}

} // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    const auto& table = crc_table();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::uint8_t b : bytes) {
        c = table[(c ^ b) & 0xFFu] ^ (c >> 8);
    }
    return c ^ 0xFFFFFFFFu;
}

void save_adapter(const LoriAdapter& adapter, const std::filesystem::path& path,
                  const AdapterFileInfo& info) {
    json meta;
    meta["kind"] = info.kind;
    meta["task_id"] = adapter.task_id;
    meta["layer"] = info.slot.layer;
    meta["projection"] = std::string(to_string(info.slot.proj));
    meta["d_in"] = adapter.shape.d_in;
    meta["d_out"] = adapter.shape.d_out;
    meta["rank"] = adapter.shape.r;
    meta["alpha"] = adapter.alpha;
    meta["seed"] = info.seed;
    meta["calibrated"] = adapter.calibrated;
    meta["sparsity"] = info.sparsity;
    meta["granularity"] = info.granularity;
    meta["calibration_steps"] = info.calibration_steps;
    meta["tool"] = "lori/0.1.0";

    std::vector<std::uint8_t> payload;
    payload.reserve(4 * (adapter.a.size() + adapter.b.size()) + adapter.mask.bytes().size());
    append_matrix_f32(payload, adapter.a);
    append_matrix_f32(payload, adapter.b);
    payload.insert(payload.end(), adapter.mask.bytes().begin(), adapter.mask.bytes().end());

    write_file(path, kAdapterMagic, kAdapterFormatVersion, meta.dump(), payload);
}

LoadedAdapter load_adapter(const std::filesystem::path& path) {
    Reader in(path);
    check_magic(in.take(4, "magic"), kAdapterMagic);
    check_version(in.take_u32("version"), kAdapterFormatVersion);
    const std::uint32_t meta_len = in.take_u32("metadata length");
    if (meta_len > kMaxMetadataLen) {
        throw FileFormatError("metadata length " + std::to_string(meta_len) + " exceeds cap");
    }
    const json meta = parse_metadata(in.take(meta_len, "metadata"));

    LoadedAdapter out;
    try {
        out.info.kind = meta.at("kind").get<std::string>();
        out.info.slot.layer = meta.at("layer").get<int>();
        out.info.slot.proj = projection_from_string(meta.at("projection").get<std::string>());
        out.info.seed = meta.at("seed").get<std::uint64_t>();
        out.info.sparsity = meta.at("sparsity").get<double>();
        out.info.granularity = meta.at("granularity").get<std::string>();
        out.info.calibration_steps = meta.at("calibration_steps").get<std::int64_t>();

        out.adapter.shape.d_in = meta.at("d_in").get<std::size_t>();
        out.adapter.shape.d_out = meta.at("d_out").get<std::size_t>();
        out.adapter.shape.r = meta.at("rank").get<std::size_t>();
        out.adapter.alpha = meta.at("alpha").get<double>();
        out.adapter.task_id = meta.at("task_id").get<std::string>();
        out.adapter.calibrated = meta.at("calibrated").get<bool>();
    } catch (const json::exception& e) {
        throw FileFormatError(std::string("metadata field error: ") + e.what());
    }
    out.adapter.shape.validate();

    const AdapterShape& sh = out.adapter.shape;
    const std::size_t a_bytes = 4 * sh.d_in * sh.r;
    const std::size_t b_bytes = 4 * sh.r * sh.d_out;
    const std::size_t m_bytes = BitMask::byte_size(sh.r * sh.d_out);

    // The whole payload is read and checksummed before any field is used.
    const auto payload = in.take(a_bytes + b_bytes + m_bytes, "payload");
    const std::uint32_t stored = in.take_u32("checksum");
    const std::uint32_t actual = crc32(payload);
    if (stored != actual) {
        std::ostringstream msg;
        msg << "payload checksum mismatch: stored " << std::hex << stored << ", computed "
            << actual;
        throw ChecksumError(msg.str());
    }

    out.adapter.a = read_matrix_f32(payload.subspan(0, a_bytes), sh.d_in, sh.r);
    out.adapter.b = read_matrix_f32(payload.subspan(a_bytes, b_bytes), sh.r, sh.d_out);
    out.adapter.mask = BitMask(sh.r, sh.d_out);
    std::memcpy(out.adapter.mask.bytes().data(), payload.data() + a_bytes + b_bytes, m_bytes);
    out.adapter.stream = StreamKey{out.info.seed, out.adapter.task_id,
                                   static_cast<std::uint64_t>(out.info.slot.layer),
                                   std::string(to_string(out.info.slot.proj))};
    return out;
}

std::string inspect_adapter(const std::filesystem::path& path) {
    const LoadedAdapter loaded = load_adapter(path);
    const LoriAdapter& ad = loaded.adapter;
    std::ostringstream out;
    out << path.filename().string() << "\n"
        << "  kind        " << loaded.info.kind << "\n"
        << "  task        " << ad.task_id << "\n"
        << "  slot        " << loaded.info.slot.str() << "\n"
        << "  shape       " << ad.shape.d_in << " x " << ad.shape.d_out << " (rank "
        << ad.shape.r << ", alpha " << ad.alpha << ")\n"
        << "  seed        " << loaded.info.seed << "\n"
        << "  calibrated  " << (ad.calibrated ? "yes" : "no") << "\n"
        << "  sparsity    s=" << loaded.info.sparsity << " (" << loaded.info.granularity
        << ", " << loaded.info.calibration_steps << " calibration steps)\n"
        << "  mask        " << ad.mask.count() << "/" << ad.mask.size() << " set ("
        << (100.0 * static_cast<double>(ad.mask.count()) / static_cast<double>(ad.mask.size()))
        << "% retained)\n"
        << "  |B| max     " << max_abs(ad.b) << "\n";
    return out.str();
}

void save_merged_model(const MergedModel& model, const std::filesystem::path& path) {
    json meta;
    meta["method"] = std::string(to_string(model.spec.method));
    meta["weights"] = model.spec.weights;
    meta["density"] = model.spec.density;
    meta["seed"] = model.spec.seed;
    meta["adapters"] = model.adapter_ids;
    json slots = json::array();
    for (const auto& [key, w] : model.weights) {
        slots.push_back({{"layer", key.layer},
                         {"projection", std::string(to_string(key.proj))},
                         {"rows", w.rows()},
                         {"cols", w.cols()}});
    }
    meta["slots"] = slots;
    meta["tool"] = "lori/0.1.0";

    std::vector<std::uint8_t> payload;
    for (const auto& [key, w] : model.weights) {
        append_matrix_f32(payload, w);
    }
    write_file(path, kModelMagic, kModelFormatVersion, meta.dump(), payload);
}

MergedModel load_merged_model(const std::filesystem::path& path) {
    Reader in(path);
    check_magic(in.take(4, "magic"), kModelMagic);
    check_version(in.take_u32("version"), kModelFormatVersion);
    const std::uint32_t meta_len = in.take_u32("metadata length");
    if (meta_len > kMaxMetadataLen) {
        throw FileFormatError("metadata length " + std::to_string(meta_len) + " exceeds cap");
    }
    const json meta = parse_metadata(in.take(meta_len, "metadata"));

    MergedModel model;
    std::vector<std::pair<SlotKey, std::pair<std::size_t, std::size_t>>> slots;
    std::size_t payload_bytes = 0;
    try {
        model.spec.method = merge_method_from_string(meta.at("method").get<std::string>());
        model.spec.weights = meta.at("weights").get<std::vector<double>>();
        model.spec.density = meta.at("density").get<double>();
        model.spec.seed = meta.at("seed").get<std::uint64_t>();
        model.adapter_ids = meta.at("adapters").get<std::vector<std::string>>();
        for (const auto& s : meta.at("slots")) {
            SlotKey key{s.at("layer").get<int>(),
                        projection_from_string(s.at("projection").get<std::string>())};
            const auto rows = s.at("rows").get<std::size_t>();
            const auto cols = s.at("cols").get<std::size_t>();
            slots.emplace_back(key, std::make_pair(rows, cols));
            payload_bytes += 4 * rows * cols;
        }
    } catch (const json::exception& e) {
        throw FileFormatError(std::string("metadata field error: ") + e.what());
    }

    const auto payload = in.take(payload_bytes, "payload");
    const std::uint32_t stored = in.take_u32("checksum");
    if (stored != crc32(payload)) {
        throw ChecksumError("payload checksum mismatch");
    }

    std::size_t offset = 0;
    for (const auto& [key, shape] : slots) {
        const std::size_t n = 4 * shape.first * shape.second;
        model.weights.emplace(key,
                              read_matrix_f32(payload.subspan(offset, n), shape.first,
                                              shape.second));
        offset += n;
    }
    return model;
}

} // namespace lori
