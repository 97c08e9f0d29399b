#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "bitcn/model.hpp"

namespace bitcn {

namespace {

constexpr char kMagic[4] = {'B', 'T', 'C', 'N'};
constexpr std::uint32_t kFormatVersion = 1;

struct ByteWriter {
    std::string buf;

    void bytes(const void* p, std::size_t n) {
        buf.append(static_cast<const char*>(p), n);
    }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
};

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    void bytes(void* p, std::size_t n) {
        if (pos + n > buf.size())
            throw DataError("truncated checkpoint file");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, 8);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, 8);
        return v;
    }
    std::string str(std::size_t n) {
        if (pos + n > buf.size())
            throw DataError("truncated checkpoint file");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string fmt_double(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<std::size_t> parse_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stoull(tok));
    return out;
}

std::string encode_header(const BiTCNModel& model,
                          const CheckpointExtras* extras) {
    const HyperParams& hp = model.hyper();
    const ModelDims& dims = model.dims();
    std::ostringstream os;
    os << "state_size = " << hp.state_size << '\n';
    os << "layers = " << hp.layers << '\n';
    os << "forward_layers = " << hp.forward_layers << '\n';
    os << "kernel_size = " << hp.kernel_size << '\n';
    os << "dropout = " << fmt_double(hp.dropout_p) << '\n';
    os << "groups = " << hp.groups << '\n';
    os << "sigma_floor = " << fmt_double(hp.sigma_floor) << '\n';
    os << "distribution = "
       << (hp.distribution == Family::student_t3 ? "student_t3" : "gaussian")
       << '\n';
    os << "softplus_mu = " << (hp.softplus_mu ? 1 : 0) << '\n';
    os << "forward_module = " << (hp.forward_module ? 1 : 0) << '\n';
    os << "join = "
       << (hp.join == HyperParams::Join::concat ? "concat" : "additive")
       << '\n';
    os << "lag_dim = " << dims.lag_dim << '\n';
    os << "cov_dim = " << dims.cov_dim << '\n';
    os << "cat_vocab = " << fmt_list(dims.cat_vocab) << '\n';
    os << "cat_emb = " << fmt_list(dims.cat_emb) << '\n';
    os << "init_seed = " << model.init_seed() << '\n';
    os << "epoch = " << (extras ? extras->epoch : 0) << '\n';
    os << "rng_state = " << (extras ? extras->rng_state : std::string())
       << '\n';
    os << "build = " << (extras ? extras->build : std::string()) << '\n';
    // the embedded config is one header line; its newlines are escaped
    std::string echo = extras ? extras->config_echo : std::string();
    for (char& c : echo)
        if (c == '\n') c = '\x1f';
    os << "config = " << echo << '\n';
    return os.str();
}

std::map<std::string, std::string> parse_header(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return kv;
}

const std::string& need(const std::map<std::string, std::string>& kv,
                        const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end())
        throw DataError("checkpoint header is missing '" + key + "'");
    return it->second;
}

} // namespace

void save_checkpoint(const BiTCNModel& model, const std::string& path,
                     const CheckpointExtras* extras) {
    ByteWriter w;
    w.bytes(kMagic, 4);
    w.u32(kFormatVersion);

    const std::string header = encode_header(model, extras);
    w.u64(header.size());
    w.bytes(header.data(), header.size());

    std::size_t n_tensors = model.parameters().size();
    if (extras) n_tensors += extras->opt_state.size();
    w.u32(static_cast<std::uint32_t>(n_tensors));

    auto put_tensor = [&w](const std::string& name, const Shape& shape,
                           const std::vector<double>& values) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.u32(static_cast<std::uint32_t>(shape.size()));
        for (std::size_t d : shape) w.u64(d);
        for (double v : values) w.f64(v);
    };

    for (const auto& [name, t] : model.parameters())
        put_tensor(name, t.shape(), t.values());
    if (extras)
        for (const auto& [name, values] : extras->opt_state)
            put_tensor(name, {values.size()}, values);

    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(w.buf.data()),
              static_cast<uInt>(w.buf.size())));
    w.u32(crc);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!f) throw DataError("failed writing checkpoint '" + path + "'");
}

BiTCNModel load_checkpoint(const std::string& path,
                           CheckpointExtras* extras) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    if (buf.size() < 12) throw DataError("truncated checkpoint file");
    const std::uint32_t stored_crc =
        *reinterpret_cast<const std::uint32_t*>(buf.data() + buf.size() - 4);
    const std::uint32_t actual_crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
              static_cast<uInt>(buf.size() - 4)));
    if (stored_crc != actual_crc)
        throw DataError("corrupt checkpoint (CRC mismatch)");

    ByteReader r{buf};
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not a checkpoint file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion)
        throw DataError("unsupported checkpoint format version " +
                        std::to_string(version));

    const std::uint64_t header_len = r.u64();
    const auto kv = parse_header(r.str(header_len));

    HyperParams hp;
    hp.state_size = std::stoull(need(kv, "state_size"));
    hp.layers = std::stoull(need(kv, "layers"));
    hp.forward_layers = std::stoull(need(kv, "forward_layers"));
    hp.kernel_size = std::stoull(need(kv, "kernel_size"));
    hp.dropout_p = std::stod(need(kv, "dropout"));
    hp.groups = std::stoull(need(kv, "groups"));
    hp.sigma_floor = std::stod(need(kv, "sigma_floor"));
    const std::string family = need(kv, "distribution");
    if (family == "student_t3")
        hp.distribution = Family::student_t3;
    else if (family == "gaussian")
        hp.distribution = Family::gaussian;
    else
        throw DataError("unknown distribution '" + family + "' in checkpoint");
    hp.softplus_mu = need(kv, "softplus_mu") == "1";
    hp.forward_module = need(kv, "forward_module") == "1";
    const std::string join = need(kv, "join");
    if (join == "concat")
        hp.join = HyperParams::Join::concat;
    else if (join == "additive")
        hp.join = HyperParams::Join::additive;
    else
        throw DataError("unknown join mode '" + join + "' in checkpoint");

    ModelDims dims;
    dims.lag_dim = std::stoull(need(kv, "lag_dim"));
    dims.cov_dim = std::stoull(need(kv, "cov_dim"));
    dims.cat_vocab = parse_list(need(kv, "cat_vocab"));
    dims.cat_emb = parse_list(need(kv, "cat_emb"));

    BiTCNModel model(hp, dims, std::stoull(need(kv, "init_seed")));
    if (extras) {
        extras->epoch = std::stoull(need(kv, "epoch"));
        extras->rng_state = need(kv, "rng_state");
        if (auto it = kv.find("build"); it != kv.end())
            extras->build = it->second;
        if (auto it = kv.find("config"); it != kv.end()) {
            extras->config_echo = it->second;
            for (char& c : extras->config_echo)
                if (c == '\x1f') c = '\n';
        }
        extras->opt_state.clear();
    }

    const std::uint32_t n_tensors = r.u32();
    std::size_t matched = 0;
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.str(name_len);
        const std::uint32_t rank = r.u32();
        Shape shape(rank);
        std::size_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = r.u64();
            count *= shape[d];
        }
        std::vector<double> values(count);
        for (double& v : values) v = r.f64();

        if (name.rfind("adam.", 0) == 0) {
            if (extras) extras->opt_state.emplace_back(name, std::move(values));
            continue;
        }
        bool found = false;
        for (const auto& [pname, t] : model.parameters()) {
            if (pname != name) continue;
            if (t.shape() != shape)
                throw DataError("checkpoint tensor '" + name +
                                "' has an unexpected shape");
            const_cast<Tensor&>(t).values_mut() = std::move(values);
            found = true;
            ++matched;
            break;
        }
        if (!found)
            throw DataError("checkpoint contains unknown tensor '" + name +
                            "'");
    }
    if (matched != model.parameters().size())
        throw DataError("checkpoint is missing model parameters");

    // Trailing CRC: consumed above; nothing may follow it.
    if (r.pos != buf.size() - 4)
        throw DataError("checkpoint has trailing garbage");
    return model;
}

} // namespace bitcn
