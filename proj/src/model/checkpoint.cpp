// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/model/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "proxyv/errors.hpp"

namespace proxyv {

namespace {

constexpr char kMagic[8] = {'P', 'X', 'V', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
std::vector<std::uint8_t> encode(const Tensor<T>& t) {
    std::vector<std::uint8_t> out(t.numel() * 4);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const float f = static_cast<float>(t[i]);
        std::memcpy(out.data() + i * 4, &f, 4);
    }
    return out;
}

template <typename T>
Tensor<T> decode(const Shape& shape, const std::uint8_t* bytes) {
    Tensor<T> t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        float f;
        std::memcpy(&f, bytes + i * 4, 4);
        t[i] = static_cast<T>(f);
    }
    return t;
}

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw StateError("sha256: digest computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

template <typename T>
void save_checkpoint(const std::string& path, Model<T>& model, const Adam<T>* optimizer, std::uint64_t seed) {
    nlohmann::json header;
    header["format"] = "proxyv-checkpoint";
    header["version"] = kVersion;
    header["config"] = model.config();
    header["seed"] = seed;
    std::vector<std::vector<std::uint8_t>> blobs;
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    const auto add = [&](const std::string& name, const Tensor<T>& t) {
        blobs.push_back(encode(t));
        const auto& b = blobs.back();
        tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"bytes", b.size()},
                           {"sha256", sha256_hex(b)}});
        offset += b.size();
    };
    const auto params = model.parameters();
    for (auto* p : params) add(p->name, p->value);
    if (optimizer != nullptr) {
        header["optimizer"] = {{"steps", optimizer->steps_taken()},
                               {"learning_rate", optimizer->options().learning_rate}};
        const auto& m = optimizer->first_moments();
        const auto& v = optimizer->second_moments();
        for (std::size_t i = 0; i < m.size() && i < params.size(); ++i) add("adam.m/" + params[i]->name, m[i]);
        for (std::size_t i = 0; i < v.size() && i < params.size(); ++i) add("adam.v/" + params[i]->name, v[i]);
    }
    header["tensors"] = tensors;
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("save_checkpoint: cannot open " + path);
    os.write(kMagic, sizeof kMagic);
    write_u32(os, kVersion);
    write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : blobs) os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!os) throw InputError("save_checkpoint: write failed for " + path);
}

template <typename T>
LoadedCheckpoint<T> load_unchecked(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("load_checkpoint: cannot open " + path);
    std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const std::size_t fixed = sizeof kMagic + 4 + 8;
    if (file.size() < fixed || std::memcmp(file.data(), kMagic, sizeof kMagic) != 0) {
        throw InputError("load_checkpoint: " + path + " is not a checkpoint");
    }
    std::uint32_t version;
    std::uint64_t header_len;
    std::memcpy(&version, file.data() + 8, 4);
    std::memcpy(&header_len, file.data() + 12, 8);
    if (version != kVersion) throw InputError("load_checkpoint: unsupported version " + std::to_string(version));
    if (header_len > file.size() - fixed) throw InputError("load_checkpoint: truncated header");
    const nlohmann::json header = nlohmann::json::parse(file.begin() + fixed, file.begin() + fixed + header_len);
    const std::uint8_t* data = file.data() + fixed + header_len;
    const std::size_t data_len = file.size() - fixed - header_len;

    LoadedCheckpoint<T> out;
    out.seed = header.value("seed", std::uint64_t{0});
    out.model = std::make_unique<Model<T>>(header.at("config").get<ModelConfig>(), out.seed);
    std::map<std::string, Tensor<T>> found;
    for (const auto& t : header.at("tensors")) {
        const std::string name = t.at("name");
        const Shape shape = t.at("shape").get<Shape>();
        const std::uint64_t off = t.at("offset"), bytes = t.at("bytes");
        if (bytes != shape_numel(shape) * 4 || off > data_len || bytes > data_len - off) {
            throw InputError("load_checkpoint: tensor " + name + " has an inconsistent extent");
        }
        const std::span<const std::uint8_t> blob(data + off, bytes);
        if (sha256_hex(blob) != t.at("sha256").get<std::string>()) {
            throw InputError("load_checkpoint: digest mismatch for tensor " + name);
        }
        found.emplace(name, decode<T>(shape, blob.data()));
    }
    const auto params = out.model->parameters();
    for (auto* p : params) {
        auto it = found.find(p->name);
        if (it == found.end()) throw InputError("load_checkpoint: missing parameter " + p->name);
        if (it->second.shape() != p->value.shape()) {
            throw InputError("load_checkpoint: parameter " + p->name + " has shape " +
                             shape_to_string(it->second.shape()) + ", model expects " +
                             shape_to_string(p->value.shape()));
        }
        p->value = it->second;
    }
    if (header.contains("optimizer")) {
        out.has_optimizer = true;
        out.optimizer_steps = header["optimizer"].at("steps");
        for (auto* p : params) {
            auto m = found.find("adam.m/" + p->name);
            auto v = found.find("adam.v/" + p->name);
            if (m == found.end() || v == found.end()) break;
            out.first_moments.push_back(m->second);
            out.second_moments.push_back(v->second);
        }
    }
    return out;
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    try {
        return load_unchecked<T>(path);
    } catch (const nlohmann::json::exception& e) {
        throw InputError("load_checkpoint: malformed header in " + path + ": " + e.what());
    }
}

template void save_checkpoint(const std::string&, Model<float>&, const Adam<float>*, std::uint64_t);
template void save_checkpoint(const std::string&, Model<double>&, const Adam<double>*, std::uint64_t);
template LoadedCheckpoint<float> load_checkpoint(const std::string&);
template LoadedCheckpoint<double> load_checkpoint(const std::string&);

}  // namespace proxyv
