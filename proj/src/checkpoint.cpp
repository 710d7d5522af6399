#include <cstring>
#include <filesystem>
#include <fstream>

#include "countlab/common.hpp"
#include "countlab/model.hpp"

namespace countlab {

namespace {

constexpr char kMagic[8] = {'C', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}
void write_i32(std::ostream& out, std::int32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}
std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::int32_t read_i32(std::istream& in) {
    std::int32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

std::vector<std::int32_t> config_ints(const ModelConfig& c) {
    return {c.n_layers, c.n_heads, c.d_model,  c.mlp_mult, c.vocab_size,
            c.max_seq,  c.patch_px, c.canvas_px, c.channels};
}

}  // namespace

void save_checkpoint(const Params& p, const std::string& path,
                     const std::string& sidecar_json) {
    std::filesystem::path fp(path);
    if (fp.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(fp.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    check_data(out.good(), "cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    write_u32(out, kVersion);
    auto ints = config_ints(p.cfg);
    write_u32(out, static_cast<std::uint32_t>(ints.size()));
    for (auto v : ints) write_i32(out, v);

    Params& mp = const_cast<Params&>(p);  // refs are read-only here
    auto refs = tensor_refs(mp);
    write_u32(out, static_cast<std::uint32_t>(refs.size()));
    std::vector<float> buf;
    for (const auto& r : refs) {
        write_u32(out, static_cast<std::uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        write_u32(out, static_cast<std::uint32_t>(r.dims.size()));
        for (auto d : r.dims) write_u32(out, d);
        buf.resize(r.size);
        for (std::size_t i = 0; i < r.size; ++i)
            buf[i] = static_cast<float>(r.data[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * 4));
    }
    check_data(out.good(), "short write: " + path);
    out.close();

    std::ofstream side(path + ".json");
    check_data(side.good(), "cannot write checkpoint sidecar: " + path + ".json");
    side << sidecar_json << "\n";
}

Params load_checkpoint(const std::string& path, std::string* sidecar_json) {
    std::ifstream in(path, std::ios::binary);
    check_data(in.good(), "cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    check_data(in.good() && std::memcmp(magic, kMagic, 8) == 0,
               "not a checkpoint file: " + path);
    check_data(read_u32(in) == kVersion, "unsupported checkpoint version");
    std::uint32_t n_ints = read_u32(in);
    check_data(n_ints == 9, "unexpected config block size");
    ModelConfig cfg;
    cfg.n_layers = read_i32(in);
    cfg.n_heads = read_i32(in);
    cfg.d_model = read_i32(in);
    cfg.mlp_mult = read_i32(in);
    cfg.vocab_size = read_i32(in);
    cfg.max_seq = read_i32(in);
    cfg.patch_px = read_i32(in);
    cfg.canvas_px = read_i32(in);
    cfg.channels = read_i32(in);
    cfg.validate();

    Params p = init_params(cfg, 0);
    auto refs = tensor_refs(p);
    std::uint32_t n_tensors = read_u32(in);
    check_data(n_tensors == refs.size(), "tensor count mismatch in " + path);
    std::vector<float> buf;
    for (auto& r : refs) {
        std::uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        check_data(name == r.name, "tensor order mismatch: expected " + r.name +
                                       ", found " + name);
        std::uint32_t rank = read_u32(in);
        check_data(rank == r.dims.size(), "tensor rank mismatch: " + name);
        for (auto d : r.dims)
            check_data(read_u32(in) == d, "tensor shape mismatch: " + name);
        buf.resize(r.size);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(r.size * 4));
        check_data(in.good(), "truncated checkpoint: " + path);
        for (std::size_t i = 0; i < r.size; ++i)
            r.data[i] = static_cast<double>(buf[i]);
    }

    if (sidecar_json) {
        std::ifstream side(path + ".json");
        if (side.good()) {
            *sidecar_json = std::string((std::istreambuf_iterator<char>(side)),
                                        std::istreambuf_iterator<char>());
            if (!sidecar_json->empty() && sidecar_json->back() == '\n')
                sidecar_json->pop_back();
        } else {
            sidecar_json->clear();
        }
    }
    return p;
}

}  // namespace countlab
