/*
 * lowdose : contrast dose reduction toolkit
 *
 * Copyright 2026 The lowdose Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Checkpoint layout:
//
//   lowdose-checkpoint 1
//   enc_layers=2
//   mod_channels=8
//   dec_layers=3
//   hidden=32
//   in_channels=1
//   residual=0
//   disc_width=0            (0: no discriminator)
//   seed=7
//   steps=1000
//   generator_params=2361
//   discriminator_params=0
//   end
//   <generator f32 LE><discriminator f32 LE>
//
// Parameters are written in generator_layout() / discriminator_layout() order.

#include "lowdose/error.hpp"
#include "lowdose/model.hpp"
#include "util.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace lowdose {

using detail::strprintf;

namespace {

constexpr const char *kMagic = "lowdose-checkpoint 1";

void write_f32(std::ostream &os, const std::vector<double> &v) {
    std::vector<char> buf(v.size() * 4);
    for (std::size_t i = 0; i < v.size(); ++i) {
        auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v[i]));
        for (int b = 0; b < 4; ++b) buf[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xffu);
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<double> read_f32(std::istream &is, std::size_t n, const std::string &path) {
    std::vector<unsigned char> buf(n * 4);
    is.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size())
        throw DataError(strprintf("%s: truncated parameter block (%zu of %zu bytes)", path.c_str(),
                                  static_cast<std::size_t>(is.gcount()), buf.size()));
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(buf[i * 4 + b]) << (8 * b);
        const float f = std::bit_cast<float>(u);
        if (!std::isfinite(f)) throw DataError(strprintf("%s: non-finite parameter %zu", path.c_str(), i));
        v[i] = f;
    }
    return v;
}

} // namespace

void save_checkpoint(const ModelParams &p, const TrainHistory &history, std::uint64_t seed,
                     const std::string &path) {
    p.arch.validate();
    if (p.generator.size() != p.arch.parameter_count())
        throw DataError("generator parameter count does not match the architecture");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path);
    const auto &a = p.arch;
    os << kMagic << '\n'
       << "enc_layers=" << a.enc_layers << '\n'
       << "mod_channels=" << a.mod_channels << '\n'
       << "dec_layers=" << a.dec_layers << '\n'
       << "hidden=" << a.hidden << '\n'
       << "in_channels=" << a.in_channels << '\n'
       << "residual=" << (a.residual ? 1 : 0) << '\n'
       << "disc_width=" << (p.disc ? p.disc->width : 0) << '\n'
       << "seed=" << seed << '\n'
       << "steps=" << history.size() << '\n'
       << "generator_params=" << p.generator.size() << '\n'
       << "discriminator_params=" << p.discriminator.size() << '\n'
       << "end\n";
    write_f32(os, p.generator);
    write_f32(os, p.discriminator);
    if (!os) throw DataError("failed writing checkpoint " + path);
}

ModelParams load_checkpoint(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path);
    std::string line;
    if (!std::getline(is, line) || line != kMagic)
        throw DataError(path + ": not a lowdose checkpoint or unsupported format version");
    std::map<std::string, long long> kv;
    bool ended = false;
    while (std::getline(is, line)) {
        if (line == "end") {
            ended = true;
            break;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError(path + ": malformed header line '" + line + "'");
        kv[line.substr(0, eq)] = detail::parse_int(line.substr(eq + 1), path + ": " + line.substr(0, eq));
    }
    if (!ended) throw DataError(path + ": truncated header");
    auto get = [&](const char *k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw DataError(strprintf("%s: missing header key '%s'", path.c_str(), k));
        return it->second;
    };
    ModelParams p;
    p.arch.enc_layers = static_cast<int>(get("enc_layers"));
    p.arch.mod_channels = static_cast<int>(get("mod_channels"));
    p.arch.dec_layers = static_cast<int>(get("dec_layers"));
    p.arch.hidden = static_cast<int>(get("hidden"));
    p.arch.in_channels = static_cast<int>(get("in_channels"));
    p.arch.residual = get("residual") != 0;
    try {
        p.arch.validate();
    } catch (const Error &e) {
        throw DataError(path + ": invalid architecture: " + e.what());
    }
    const auto ng = get("generator_params");
    if (ng < 0 || static_cast<std::size_t>(ng) != p.arch.parameter_count())
        throw DataError(strprintf("%s: parameter count %lld does not match architecture (%zu)", path.c_str(), ng,
                                  p.arch.parameter_count()));
    const auto width = get("disc_width");
    const auto nd = get("discriminator_params");
    std::size_t nd_expected = 0;
    if (width > 0) {
        p.disc = DiscConfig{static_cast<int>(width)};
        const auto l = discriminator_layout(*p.disc);
        nd_expected = l.back().offset + l.back().size;
    }
    if (nd < 0 || static_cast<std::size_t>(nd) != nd_expected)
        throw DataError(strprintf("%s: discriminator parameter count %lld does not match width %lld", path.c_str(),
                                  nd, width));
    p.generator = read_f32(is, static_cast<std::size_t>(ng), path);
    p.discriminator = read_f32(is, nd_expected, path);
    if (is.peek() != std::char_traits<char>::eof()) throw DataError(path + ": trailing bytes after parameters");
    return p;
}

void write_history_csv(const TrainHistory &history, const std::string &path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << "step,l1,adv,reg,total\n";
    for (const auto &r : history)
        os << r.step << ',' << detail::format_exact(r.l1) << ',' << detail::format_exact(r.adv) << ','
           << detail::format_exact(r.reg) << ',' << detail::format_exact(r.total) << '\n';
    if (!os) throw DataError("failed writing " + path);
}

} // namespace lowdose
