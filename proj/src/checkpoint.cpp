#include <cstring>
#include <filesystem>
#include <fstream>

#include "dear/trainer.hpp"

namespace dear {

namespace {

constexpr char kMagic[8] = {'D', 'E', 'A', 'R', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw io_error("checkpoint: truncated file");
    return v;
}

void put_string(std::ofstream& out, const std::string& s) {
    put<uint64_t>(out, s.size());
    out.write(s.data(), std::streamsize(s.size()));
}

std::string get_string(std::ifstream& in) {
    const uint64_t n = get<uint64_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), std::streamsize(n));
    if (!in) throw io_error("checkpoint: truncated string");
    return s;
}

void put_tensor(std::ofstream& out, const ad::Tensor& t) {
    put<uint32_t>(out, uint32_t(t.shape.size()));
    for (int d : t.shape) put<int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              std::streamsize(t.data.size() * sizeof(double)));
}

ad::Tensor get_tensor(std::ifstream& in) {
    const uint32_t rank = get<uint32_t>(in);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = get<int32_t>(in);
    ad::Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            std::streamsize(t.data.size() * sizeof(double)));
    if (!in) throw io_error("checkpoint: truncated tensor");
    return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot write checkpoint: " + path);
        out.write(kMagic, sizeof kMagic);
        put<uint32_t>(out, uint32_t(kCheckpointFormatVersion));
        put_string(out, ck.config.to_text());
        put_string(out, ck.manifest_path);
        put<int32_t>(out, ck.next_epoch);
        put<int64_t>(out, ck.adam.t);
        put<uint32_t>(out, uint32_t(ck.bank.tensors.size()));
        for (size_t i = 0; i < ck.bank.tensors.size(); ++i) {
            put_string(out, ck.bank.names[i]);
            put_tensor(out, ck.bank.tensors[i]);
            put_tensor(out, ck.adam.m[i]);
            put_tensor(out, ck.adam.v[i]);
        }
        if (!out) throw io_error("checkpoint write failed: " + path);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw io_error("checkpoint rename failed: " + path + " (" + ec.message() + ")");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw io_error("not a checkpoint file: " + path);
    const uint32_t version = get<uint32_t>(in);
    if (version != uint32_t(kCheckpointFormatVersion))
        throw io_error("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    ck.config = TrainConfig::from_string(get_string(in));
    ck.manifest_path = get_string(in);
    ck.next_epoch = get<int32_t>(in);
    ck.adam.t = get<int64_t>(in);
    const uint32_t n = get<uint32_t>(in);
    for (uint32_t i = 0; i < n; ++i) {
        ck.bank.names.push_back(get_string(in));
        ck.bank.tensors.push_back(get_tensor(in));
        ck.adam.m.push_back(get_tensor(in));
        ck.adam.v.push_back(get_tensor(in));
    }
    return ck;
}

}  // namespace dear
