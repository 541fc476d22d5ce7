#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "xmeta/errors.hpp"
#include "xmeta/model.hpp"

namespace xmeta {

// Layout (all integers little-endian):
//   bytes 0..7   magic "XMETAC01"
//   bytes 8..15  u64 header length H
//   H bytes      UTF-8 JSON header: {"encoder": {input_dim, hidden_dim,
//                num_layers, activation, dropout_rate}, "heads": [{tag,
//                classes}...], "param_count": P}
//   8 bytes      u64 P (must match the header)
//   8*P bytes    f64 parameters in flat order (encoder layers, then heads in
//                registration order; weights row-major, then bias)
// Doubles are written as raw IEEE-754 bits, so round-trips are bit-exact.

namespace {

constexpr char kMagic[8] = {'X', 'M', 'E', 'T', 'A', 'C', '0', '1'};

void write_u64(std::ostream& out, uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& in, const std::string& path) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw DataError(path + ": truncated checkpoint");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    nlohmann::json header;
    const EncoderConfig& cfg = model.config();
    header["encoder"] = {{"input_dim", cfg.input_dim},
                         {"hidden_dim", cfg.hidden_dim},
                         {"num_layers", cfg.num_layers},
                         {"activation", to_string(cfg.activation)},
                         {"dropout_rate", cfg.dropout_rate}};
    header["heads"] = nlohmann::json::array();
    for (const std::string& tag : model.head_tags())
        header["heads"].push_back({{"tag", tag}, {"classes", model.head_classes(tag)}});
    header["param_count"] = model.param_count();
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    write_u64(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    const Vec64 flat = model.flatten();
    write_u64(out, flat.size());
    for (double v : flat) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        write_u64(out, bits);
    }
    if (!out) throw DataError("write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);

    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError(path + ": not a checkpoint file (bad magic)");

    const uint64_t header_len = read_u64(in, path);
    if (header_len > (1ull << 20)) throw DataError(path + ": implausible header length");
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw DataError(path + ": truncated checkpoint");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": bad checkpoint header (" + e.what() + ")");
    }

    EncoderConfig cfg;
    try {
        const auto& enc = header.at("encoder");
        cfg.input_dim = enc.at("input_dim").get<size_t>();
        cfg.hidden_dim = enc.at("hidden_dim").get<size_t>();
        cfg.num_layers = enc.at("num_layers").get<size_t>();
        cfg.activation = activation_from_string(enc.at("activation").get<std::string>());
        cfg.dropout_rate = enc.at("dropout_rate").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": bad encoder header (" + e.what() + ")");
    }

    Rng init_rng(0);
    Model model(cfg, init_rng);
    try {
        for (const auto& head : header.at("heads"))
            model.register_head(head.at("tag").get<std::string>(),
                                head.at("classes").get<size_t>(), init_rng);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": bad heads header (" + e.what() + ")");
    }

    const uint64_t declared = header.value("param_count", uint64_t{0});
    if (declared != model.param_count())
        throw DataError(path + ": header declares " + std::to_string(declared) +
                        " parameters, architecture implies " +
                        std::to_string(model.param_count()));
    const uint64_t stored = read_u64(in, path);
    if (stored != declared)
        throw DataError(path + ": parameter block length mismatch");

    Vec64 flat(stored);
    for (uint64_t i = 0; i < stored; ++i) {
        const uint64_t bits = read_u64(in, path);
        std::memcpy(&flat[i], &bits, 8);
    }
    model.set_from_flat(flat);
    return model;
}

}  // namespace xmeta
