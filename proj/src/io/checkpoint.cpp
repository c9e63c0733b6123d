#include "trex/io/checkpoint.hpp"

#include "trex/io/config.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace trex::io {

std::uint64_t fnv1a64(const void* data, std::size_t size)
{
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

void put_u(std::string& out, std::uint64_t v, int bytes)
{
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_str(std::string& out, const std::string& s)
{
    put_u(out, s.size(), 4);
    out += s;
}

class Reader {
public:
    Reader(const std::string& bytes, std::size_t begin, std::size_t end) : bytes_(bytes), pos_(begin), end_(end) {}

    std::uint64_t u(int n)
    {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::string str()
    {
        const auto n = static_cast<std::size_t>(u(4));
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == end_; }

private:
    void need(std::size_t n) const
    {
        if (end_ - pos_ < n) throw FormatError("checkpoint body truncated");
    }

    const std::string& bytes_;
    std::size_t pos_, end_;
};

std::string config_text(const model::ModelConfig& cfg)
{
    std::string text;
    for (const auto& [k, v] : model_config_entries(cfg)) text += k + "=" + v + "\n";
    return text;
}

Entries parse_entries(const std::string& text)
{
    Entries entries;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed config echo line '" + line + "'");
        entries.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return entries;
}

std::string describe_mismatch(const model::ModelConfig& stored, const model::ModelConfig& expected)
{
    const auto a = model_config_entries(stored);
    const auto b = model_config_entries(expected);
    std::string diff;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].second != b[i].second) {
            if (!diff.empty()) diff += "; ";
            diff += a[i].first + ": checkpoint " + a[i].second + ", run " + b[i].second;
        }
    }
    return "checkpoint config does not match the run config (" + diff + ")";
}

}  // namespace

std::string serialize_checkpoint(const model::PairModel<float>& model, const CheckpointMeta& meta)
{
    static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
    std::string body;
    put_str(body, config_text(model.config()));
    put_u(body, meta.seed, 8);
    put_u(body, meta.epoch, 8);
    put_u(body, meta.fold, 4);
    const auto& items = model.params().items();
    put_u(body, items.size(), 4);
    for (const auto& [name, t] : items) {
        put_str(body, name);
        put_u(body, t.rank(), 4);
        for (auto d : t.shape()) put_u(body, d, 8);
        for (float v : t.values()) put_u(body, std::bit_cast<std::uint32_t>(v), 4);
    }
    std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
    put_u(out, kCheckpointVersion, 4);
    put_u(out, body.size(), 8);
    out += body;
    put_u(out, fnv1a64(body.data(), body.size()), 8);
    return out;
}

LoadedCheckpoint deserialize_checkpoint(const std::string& bytes, const std::optional<model::ModelConfig>& expected)
{
    constexpr std::size_t header = sizeof kCheckpointMagic + 4 + 8;
    if (bytes.size() < sizeof kCheckpointMagic || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
        throw BadMagicError("not a TREX checkpoint (bad magic)");
    }
    if (bytes.size() < header + 8) throw FormatError("checkpoint truncated");
    Reader head(bytes, sizeof kCheckpointMagic, header);
    const auto version = static_cast<std::uint32_t>(head.u(4));
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    }
    const auto body_size = head.u(8);
    if (body_size != bytes.size() - header - 8) throw FormatError("checkpoint size does not match its header");
    Reader tail(bytes, header + body_size, bytes.size());
    if (tail.u(8) != fnv1a64(bytes.data() + header, body_size)) throw ChecksumError("checkpoint checksum mismatch");

    Reader body(bytes, header, header + body_size);
    LoadedCheckpoint out;
    try {
        out.config = parse_model_config(parse_entries(body.str()));
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("checkpoint config echo: ") + e.what());
    }
    if (expected && !(*expected == out.config)) throw ConfigMismatchError(describe_mismatch(out.config, *expected));
    out.meta.seed = body.u(8);
    out.meta.epoch = body.u(8);
    out.meta.fold = static_cast<std::uint32_t>(body.u(4));
    out.model = std::make_unique<model::PairModel<float>>(out.config, 0);
    const auto& items = out.model->params().items();
    const auto count = body.u(4);
    if (count != items.size()) {
        throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model expects " + std::to_string(items.size()));
    }
    for (const auto& [name, t] : items) {
        const auto stored = body.str();
        if (stored != name) throw FormatError("tensor '" + stored + "' where '" + name + "' was expected");
        const auto rank = body.u(4);
        nn::Shape shape;
        for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(body.u(8)));
        if (shape != t.shape()) {
            throw FormatError("tensor '" + name + "' has shape " + nn::shape_str(shape) + ", model expects " + nn::shape_str(t.shape()));
        }
        auto dst = nn::Tensor<float>(t).mutable_values();
        for (auto& v : dst) v = std::bit_cast<float>(static_cast<std::uint32_t>(body.u(4)));
    }
    if (!body.done()) throw FormatError("trailing bytes in checkpoint body");
    return out;
}

void save_checkpoint(const model::PairModel<float>& model, const CheckpointMeta& meta, const std::filesystem::path& path)
{
    const auto bytes = serialize_checkpoint(model, meta);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::optional<model::ModelConfig>& expected)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes, expected);
}

}  // namespace trex::io
