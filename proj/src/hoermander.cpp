#include "nslab/hoermander.hpp"

#include "nslab/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nslab {

namespace {

int order_of(std::span<const int> alpha)
{
    int s = 0;
    for (int a : alpha) {
        if (a < 0)
            throw std::invalid_argument("negative multi-index entry");
        s += a;
    }
    return s;
}

double falling(int e, int k)
{
    double r = 1.0;
    for (int i = 0; i < k; ++i)
        r *= e - i;
    return r;
}

} // namespace

//---------------------------------------------------------------------------//
// ScalarFunction
//---------------------------------------------------------------------------//

ScalarFunction ScalarFunction::constant(int n, double value)
{
    if (value == 0.0)
        return polynomial(n, {});
    return polynomial(n, {Monomial{std::vector<int>(n, 0), value}});
}

ScalarFunction ScalarFunction::polynomial(int n, std::vector<Monomial> terms)
{
    ScalarFunction f;
    f.n_ = n;
    for (auto& t : terms) {
        if (static_cast<int>(t.exp.size()) != n)
            throw std::invalid_argument("polynomial: exponent tuple has wrong length");
        for (int e : t.exp)
            if (e < 0)
                throw std::invalid_argument("polynomial: negative exponent");
        if (!std::isfinite(t.coef))
            throw std::invalid_argument("polynomial: non-finite coefficient");
        if (t.coef != 0.0)
            f.terms_.push_back(std::move(t));
    }
    return f;
}

ScalarFunction ScalarFunction::closed_form(int n, Evaluator eval)
{
    if (!eval)
        throw std::invalid_argument("closed_form: empty evaluator");
    ScalarFunction f;
    f.n_ = n;
    f.eval_ = std::move(eval);
    return f;
}

double ScalarFunction::operator()(std::span<const double> x) const
{
    static constexpr std::array<int, 16> zeros{};
    if (n_ <= 16)
        return derivative(x, std::span<const int>(zeros.data(), n_));
    std::vector<int> zero(n_, 0);
    return derivative(x, zero);
}

double ScalarFunction::derivative(std::span<const double> x, std::span<const int> alpha) const
{
    if (static_cast<int>(alpha.size()) != n_ || static_cast<int>(x.size()) != n_)
        throw std::invalid_argument("ScalarFunction: dimension mismatch");
    if (order_of(alpha) > derivative_budget)
        throw std::invalid_argument("ScalarFunction: derivative order exceeds the budget of 4");
    if (eval_)
        return eval_(x, alpha);
    double sum = 0.0;
    for (const auto& t : terms_) {
        double v = t.coef;
        for (int a = 0; a < n_ && v != 0.0; ++a) {
            if (t.exp[a] < alpha[a]) {
                v = 0.0;
                break;
            }
            v *= falling(t.exp[a], alpha[a]);
            for (int e = t.exp[a] - alpha[a]; e > 0; --e)
                v *= x[a];
        }
        sum += v;
    }
    return sum;
}

bool ScalarFunction::is_constant() const
{
    if (eval_)
        return false;
    for (const auto& t : terms_)
        for (int e : t.exp)
            if (e != 0)
                return false;
    return true;
}

ScalarFunction ScalarFunction::scaled(double factor) const
{
    if (eval_) {
        auto e = eval_;
        return closed_form(n_, [e, factor](std::span<const double> x, std::span<const int> a) {
            return factor * e(x, a);
        });
    }
    auto terms = terms_;
    for (auto& t : terms)
        t.coef *= factor;
    return polynomial(n_, std::move(terms));
}

VectorField constant_field(std::vector<double> values)
{
    const int n = static_cast<int>(values.size());
    VectorField f;
    for (double v : values)
        f.push_back(ScalarFunction::constant(n, v));
    return f;
}

//---------------------------------------------------------------------------//
// HormanderSystem
//---------------------------------------------------------------------------//

HormanderSystem::HormanderSystem(int n, std::vector<VectorField> fields, VectorField B,
                                 std::vector<std::vector<ScalarFunction>> c, VectorField d, double nu,
                                 std::string name)
    : n_(n), fields_(std::move(fields)), B_(std::move(B)), c_(std::move(c)), d_(std::move(d)), nu_(nu),
      name_(std::move(name))
{
    if (n_ < 1)
        throw std::invalid_argument("HormanderSystem: dimension must be >= 1");
    if (fields_.empty())
        throw std::invalid_argument("HormanderSystem: need at least the drift field V_0");
    if (!(nu_ > 0.0) || !std::isfinite(nu_))
        throw std::invalid_argument("HormanderSystem: nu must be positive");
    auto check = [&](const VectorField& f, const std::string& what) {
        if (static_cast<int>(f.size()) != n_)
            throw std::invalid_argument("HormanderSystem: " + what + " must have n components");
        for (const auto& s : f)
            if (s.dim() != n_)
                throw std::invalid_argument("HormanderSystem: " + what + " has wrong arity");
    };
    for (std::size_t i = 0; i < fields_.size(); ++i)
        check(fields_[i], "V_" + std::to_string(i));
    check(B_, "B");
    check(d_, "d");
    if (static_cast<int>(c_.size()) != n_)
        throw std::invalid_argument("HormanderSystem: c must be n x n");
    for (const auto& row : c_)
        check(row, "c row");
}

HormanderSystem HormanderSystem::classical(int n, double nu)
{
    auto sys = builtin("laplacian", n, nu);
    sys.name_ = "classical";
    return sys;
}

HormanderSystem HormanderSystem::builtin(const std::string& name, int n, double nu)
{
    if (name == "classical")
        return classical(n == 0 ? 2 : n, nu);
    const double s = std::sqrt(2.0 * nu);
    auto mono = [](std::vector<int> e, double c) { return Monomial{std::move(e), c}; };
    auto ones = [](int n) {
        return std::vector<std::vector<ScalarFunction>>(n, constant_field(std::vector<double>(n, 1.0)));
    };
    std::vector<VectorField> fields;
    if (name == "laplacian") {
        if (n == 0)
            n = 2;
        fields.push_back(constant_field(std::vector<double>(n, 0.0)));
        for (int i = 0; i < n; ++i) {
            std::vector<double> e(n, 0.0);
            e[i] = s;
            fields.push_back(constant_field(e));
        }
    } else if (name == "heisenberg") {
        if (n != 0 && n != 3)
            throw std::invalid_argument("builtin heisenberg lives in R^3");
        n = 3;
        fields.push_back(constant_field({0, 0, 0}));
        // X = d_x - (y/2) d_z, Y = d_y + (x/2) d_z
        fields.push_back({ScalarFunction::constant(3, s), ScalarFunction::constant(3, 0.0),
                          ScalarFunction::polynomial(3, {mono({0, 1, 0}, -0.5 * s)})});
        fields.push_back({ScalarFunction::constant(3, 0.0), ScalarFunction::constant(3, s),
                          ScalarFunction::polynomial(3, {mono({1, 0, 0}, 0.5 * s)})});
    } else if (name == "kolmogorov") {
        if (n != 0 && n != 2)
            throw std::invalid_argument("builtin kolmogorov lives in R^2");
        n = 2;
        // V_0 = x d_y, V_1 = d_x
        fields.push_back({ScalarFunction::constant(2, 0.0), ScalarFunction::polynomial(2, {mono({1, 0}, 1.0)})});
        fields.push_back(constant_field({s, 0.0}));
    } else if (name == "grushin") {
        if (n != 0 && n != 2)
            throw std::invalid_argument("builtin grushin lives in R^2");
        n = 2;
        // V_1 = d_x, V_2 = x d_y
        fields.push_back(constant_field({0.0, 0.0}));
        fields.push_back(constant_field({s, 0.0}));
        fields.push_back({ScalarFunction::constant(2, 0.0), ScalarFunction::polynomial(2, {mono({1, 0}, s)})});
    } else {
        throw std::invalid_argument("unknown builtin system '" + name + "'");
    }
    return HormanderSystem(n, std::move(fields), constant_field(std::vector<double>(n, 1.0)), ones(n),
                           constant_field(std::vector<double>(n, 0.0)), nu, name);
}

namespace {

bool all_constant(const VectorField& f)
{
    return std::all_of(f.begin(), f.end(), [](const ScalarFunction& s) { return s.is_constant(); });
}

double constant_value(const ScalarFunction& f)
{
    std::vector<double> zero(f.dim(), 0.0);
    return f(zero);
}

bool equals_constant(const ScalarFunction& f, double v)
{
    return f.is_constant() && constant_value(f) == v;
}

} // namespace

bool HormanderSystem::is_heat() const
{
    for (const auto& f : fields_[0])
        if (!equals_constant(f, 0.0))
            return false;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_, n_);
    for (std::size_t j = 1; j < fields_.size(); ++j) {
        if (!all_constant(fields_[j]))
            return false;
        Eigen::VectorXd v(n_);
        for (int i = 0; i < n_; ++i)
            v(i) = constant_value(fields_[j][i]);
        a += 0.5 * v * v.transpose();
    }
    return (a - nu_ * Eigen::MatrixXd::Identity(n_, n_)).cwiseAbs().maxCoeff() <= 1e-12 * nu_;
}

bool HormanderSystem::is_classical() const
{
    if (!is_heat())
        return false;
    for (int j = 0; j < n_; ++j) {
        if (!equals_constant(B_[j], 1.0) || !equals_constant(d_[j], 0.0))
            return false;
        for (int k = 0; k < n_; ++k)
            if (!equals_constant(c_[j][k], 1.0))
                return false;
    }
    return true;
}

bool HormanderSystem::has_constant_couplings() const
{
    if (!all_constant(d_))
        return false;
    return std::all_of(c_.begin(), c_.end(), [](const VectorField& row) { return all_constant(row); });
}

Couplings HormanderSystem::constant_couplings() const
{
    if (!has_constant_couplings())
        throw std::logic_error("constant_couplings: couplings vary in space");
    Couplings out{Eigen::MatrixXd(n_, n_), Eigen::VectorXd(n_)};
    for (int j = 0; j < n_; ++j) {
        out.d(j) = constant_value(d_[j]);
        for (int k = 0; k < n_; ++k)
            out.c(j, k) = constant_value(c_[j][k]);
    }
    return out;
}

CouplingFields HormanderSystem::sample_couplings(const Domain& domain) const
{
    CouplingFields out;
    out.c.resize(n_);
    for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k)
            out.c[j].push_back(sample_function(c_[j][k], domain));
    if (!std::all_of(d_.begin(), d_.end(), [](const ScalarFunction& f) { return equals_constant(f, 0.0); }))
        for (int j = 0; j < n_; ++j)
            out.d.push_back(sample_function(d_[j], domain));
    return out;
}

double HormanderSystem::coupling_sum() const
{
    if (!has_constant_couplings())
        throw std::logic_error("coupling_sum: couplings vary in space; use estimate_CB");
    return constant_couplings().c.cwiseAbs().sum();
}

void HormanderSystem::validate(int points, std::uint64_t seed) const
{
    StreamRng rng(seed, 0x5eed);
    const auto alphas = multi_indices(n_, derivative_budget);
    std::vector<double> x(n_), xp(n_), xm(n_);
    std::vector<int> beta(n_);

    auto check = [&](const ScalarFunction& f, const std::string& what) {
        for (int p = 0; p < points; ++p) {
            for (int a = 0; a < n_; ++a)
                x[a] = 4.0 * rng.uniform() - 2.0;
            for (const auto& alpha : alphas) {
                const double an = f.derivative(x, alpha);
                if (!std::isfinite(an))
                    throw std::domain_error("system " + name_ + ": " + what + " is not finite");
                int axis = -1;
                for (int a = 0; a < n_; ++a)
                    if (alpha[a] > 0) {
                        axis = a;
                        break;
                    }
                if (axis < 0)
                    continue;
                beta.assign(alpha.begin(), alpha.end());
                --beta[axis];
                const double h = 1e-4 * std::max(1.0, std::abs(x[axis]));
                xp = x;
                xm = x;
                xp[axis] += h;
                xm[axis] -= h;
                const double fd = (f.derivative(xp, beta) - f.derivative(xm, beta)) / (2.0 * h);
                const double scale = std::max({1.0, std::abs(an), std::abs(f.derivative(x, beta))});
                if (std::abs(fd - an) > 1e-6 * scale)
                    throw std::domain_error("system " + name_ + ": derivative of " + what
                                            + " disagrees with finite differences");
            }
        }
    };
    for (std::size_t i = 0; i < fields_.size(); ++i)
        for (int j = 0; j < n_; ++j)
            check(fields_[i][j], "V_" + std::to_string(i) + "[" + std::to_string(j) + "]");
    for (int j = 0; j < n_; ++j) {
        check(B_[j], "B[" + std::to_string(j) + "]");
        check(d_[j], "d[" + std::to_string(j) + "]");
        for (int k = 0; k < n_; ++k)
            check(c_[j][k], "c[" + std::to_string(j) + "][" + std::to_string(k) + "]");
    }
}

//---------------------------------------------------------------------------//
// System files
//---------------------------------------------------------------------------//

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& msg)
{
    throw std::runtime_error("system: " + path + ": " + msg);
}

ScalarFunction parse_poly(const json& j, int n, const std::string& path)
{
    if (j.is_number())
        return ScalarFunction::constant(n, j.get<double>());
    if (!j.is_array())
        bad(path, "expected a number or a list of {exp, coef} terms");
    std::vector<Monomial> terms;
    for (std::size_t t = 0; t < j.size(); ++t) {
        const auto& term = j[t];
        const std::string tp = path + "[" + std::to_string(t) + "]";
        if (!term.is_object())
            bad(tp, "expected an object");
        for (const auto& [key, _] : term.items())
            if (key != "exp" && key != "coef")
                bad(tp, "unknown key '" + key + "'");
        if (!term.contains("exp") || !term.contains("coef"))
            bad(tp, "needs 'exp' and 'coef'");
        if (!term["exp"].is_array() || static_cast<int>(term["exp"].size()) != n)
            bad(tp + ".exp", "expected " + std::to_string(n) + " exponents");
        Monomial m;
        for (const auto& e : term["exp"]) {
            if (!e.is_number_integer() || e.get<int>() < 0)
                bad(tp + ".exp", "exponents must be non-negative integers");
            m.exp.push_back(e.get<int>());
        }
        if (!term["coef"].is_number())
            bad(tp + ".coef", "expected a number");
        m.coef = term["coef"].get<double>();
        terms.push_back(std::move(m));
    }
    return ScalarFunction::polynomial(n, std::move(terms));
}

VectorField parse_vector(const json& j, int n, const std::string& path)
{
    if (!j.is_array() || static_cast<int>(j.size()) != n)
        bad(path, "expected " + std::to_string(n) + " components");
    VectorField f;
    for (int i = 0; i < n; ++i)
        f.push_back(parse_poly(j[i], n, path + "[" + std::to_string(i) + "]"));
    return f;
}

} // namespace

HormanderSystem parse_system(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("system: malformed JSON: ") + e.what());
    }
    if (!j.is_object())
        bad("$", "expected an object");
    static const std::vector<std::string> known{"schema", "name", "builtin", "n", "nu", "fields", "B", "c", "d"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            bad(key, "unknown key");
    if (j.contains("schema") && j["schema"] != "nslab.system/1")
        bad("schema", "unsupported schema (expected nslab.system/1)");
    const double nu = j.value("nu", 0.5);
    if (!(nu > 0.0))
        bad("nu", "must be positive");
    if (j.contains("n") && (!j["n"].is_number_integer() || j["n"].get<int>() < 1))
        bad("n", "must be a positive integer");
    if (j.contains("builtin")) {
        if (j.contains("fields") || j.contains("B") || j.contains("c") || j.contains("d"))
            bad("builtin", "cannot be combined with explicit coefficient tables");
        if (!j["builtin"].is_string())
            bad("builtin", "expected a name");
        try {
            return HormanderSystem::builtin(j["builtin"].get<std::string>(), j.value("n", 0), nu);
        } catch (const std::invalid_argument& e) {
            bad("builtin", e.what());
        }
    }
    if (!j.contains("n"))
        bad("n", "missing");
    const int n = j["n"].get<int>();
    if (!j.contains("fields") || !j["fields"].is_array() || j["fields"].empty())
        bad("fields", "expected a non-empty list [V_0, V_1, ...]");
    std::vector<VectorField> fields;
    for (std::size_t i = 0; i < j["fields"].size(); ++i)
        fields.push_back(parse_vector(j["fields"][i], n, "fields[" + std::to_string(i) + "]"));
    VectorField B = j.contains("B") ? parse_vector(j["B"], n, "B") : constant_field(std::vector<double>(n, 1.0));
    VectorField d = j.contains("d") ? parse_vector(j["d"], n, "d") : constant_field(std::vector<double>(n, 0.0));
    std::vector<VectorField> c;
    if (j.contains("c")) {
        if (!j["c"].is_array() || static_cast<int>(j["c"].size()) != n)
            bad("c", "expected an n x n table");
        for (int r = 0; r < n; ++r)
            c.push_back(parse_vector(j["c"][r], n, "c[" + std::to_string(r) + "]"));
    } else {
        c.assign(n, constant_field(std::vector<double>(n, 1.0)));
    }
    HormanderSystem sys(n, std::move(fields), std::move(B), std::move(c), std::move(d), nu,
                        j.value("name", std::string("custom")));
    sys.validate();
    return sys;
}

HormanderSystem load_system(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("system: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_system(ss.str());
}

//---------------------------------------------------------------------------//
// Brackets
//---------------------------------------------------------------------------//

namespace {

struct JetLayout {
    int n, order, stride;
    JetLayout(int n_, int order_) : n(n_), order(order_), stride(1)
    {
        for (int a = 0; a < n; ++a)
            stride *= order + 1;
    }
    void unflat(int f, std::vector<int>& alpha) const
    {
        for (int a = 0; a < n; ++a) {
            alpha[a] = f % (order + 1);
            f /= order + 1;
        }
    }
    int flat(std::span<const int> alpha) const
    {
        int f = 0, base = 1;
        for (int a = 0; a < n; ++a) {
            f += alpha[a] * base;
            base *= order + 1;
        }
        return f;
    }
};

double binomial(std::span<const int> alpha, std::span<const int> beta)
{
    double r = 1.0;
    for (std::size_t a = 0; a < alpha.size(); ++a)
        for (int i = 0; i < beta[a]; ++i)
            r = r * (alpha[a] - i) / (i + 1);
    return r;
}

} // namespace

BracketNode BracketNode::generator(int index)
{
    if (index < 0)
        throw std::invalid_argument("generator index must be non-negative");
    BracketNode b;
    b.index_ = index;
    return b;
}

int BracketNode::depth() const
{
    if (!left_)
        return 0;
    return 1 + std::max(left_->depth(), right_->depth());
}

std::string BracketNode::str() const
{
    if (!left_)
        return "V" + std::to_string(index_);
    return "[" + left_->str() + "," + right_->str() + "]";
}

BracketNode lie_bracket(const BracketNode& V, const BracketNode& W)
{
    BracketNode b;
    b.left_ = std::make_shared<const BracketNode>(V);
    b.right_ = std::make_shared<const BracketNode>(W);
    if (b.depth() > derivative_budget)
        throw std::invalid_argument("lie_bracket: derivative budget exceeded (depth > 4)");
    return b;
}

std::vector<double> BracketNode::jet(const HormanderSystem& sys, std::span<const double> x, int order) const
{
    const int n = sys.dim();
    if (order + depth() > derivative_budget)
        throw std::invalid_argument("bracket jet: derivative budget exceeded");
    const JetLayout L(n, order);
    std::vector<double> out(static_cast<std::size_t>(n * L.stride), 0.0);
    std::vector<int> alpha(n);
    if (!left_) {
        if (index_ > sys.diffusion_count())
            throw std::out_of_range("bracket: generator index beyond V_m");
        const auto& f = sys.field(index_);
        for (int k = 0; k < L.stride; ++k) {
            L.unflat(k, alpha);
            if (order_of(alpha) > order)
                continue;
            for (int j = 0; j < n; ++j)
                out[j * L.stride + k] = f[j].derivative(x, alpha);
        }
        return out;
    }
    const JetLayout C(n, order + 1);
    const auto lv = left_->jet(sys, x, order + 1);
    const auto rv = right_->jet(sys, x, order + 1);
    std::vector<int> beta(n), gamma(n);
    const std::size_t cs = static_cast<std::size_t>(C.stride);
    for (int f = 0; f < L.stride; ++f) {
        L.unflat(f, alpha);
        if (order_of(alpha) > order)
            continue;
        // D^alpha (V_k d_k W_j - W_k d_k V_j), Leibniz over beta <= alpha
        for (int fb = 0; fb < L.stride; ++fb) {
            L.unflat(fb, beta);
            bool le = true;
            for (int a = 0; a < n; ++a)
                le = le && beta[a] <= alpha[a];
            if (!le)
                continue;
            const double w = binomial(alpha, beta);
            const int ib = C.flat(beta);
            for (int k = 0; k < n; ++k) {
                for (int a = 0; a < n; ++a)
                    gamma[a] = alpha[a] - beta[a] + (a == k);
                const int ig = C.flat(gamma);
                for (int j = 0; j < n; ++j)
                    out[j * L.stride + f] += w
                        * (lv[k * cs + ib] * rv[j * cs + ig] - rv[k * cs + ib] * lv[j * cs + ig]);
            }
        }
    }
    return out;
}

std::vector<double> BracketNode::evaluate(const HormanderSystem& sys, std::span<const double> x) const
{
    return jet(sys, x, 0);
}

RankResult hormander_rank(const HormanderSystem& sys, std::span<const double> x, int max_depth)
{
    const int n = sys.dim();
    const int m = sys.diffusion_count();
    if (max_depth < 0 || max_depth > 3)
        throw std::invalid_argument("hormander_rank: max_depth must lie in [0, 3]");

    RankResult res;
    res.depth = max_depth + 1;
    std::vector<Eigen::VectorXd> columns;
    double largest = 0.0;

    auto rank_of = [&](const std::vector<Eigen::VectorXd>& cols) {
        if (cols.empty() || largest == 0.0)
            return 0;
        Eigen::MatrixXd M(n, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c)
            M.col(static_cast<Eigen::Index>(c)) = cols[c];
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
        // relative to the largest column norm seen so far
        qr.setThreshold(1e-8 * largest / std::max(qr.maxPivot(), 1e-300));
        return static_cast<int>(qr.rank());
    };
    auto offer = [&](const BracketNode& node) {
        const auto v = node.evaluate(sys, x);
        Eigen::VectorXd col = Eigen::Map<const Eigen::VectorXd>(v.data(), n);
        largest = std::max(largest, col.norm());
        columns.push_back(col);
        const int r = rank_of(columns);
        if (r > res.rank) {
            res.rank = r;
            res.basis.push_back(node);
        } else {
            columns.pop_back();
        }
    };

    std::vector<BracketNode> level;
    for (int i = 0; i <= m; ++i)
        level.push_back(BracketNode::generator(i));
    for (int i = 1; i <= m && res.rank < n; ++i)
        offer(level[i]);
    if (res.rank == n) {
        res.depth = 0;
        return res;
    }
    for (int depth = 1; depth <= max_depth; ++depth) {
        std::vector<BracketNode> next;
        for (const auto& b : level)
            for (int i = 0; i <= m; ++i) {
                if (b.is_generator() && b.index() == i)
                    continue;
                next.push_back(lie_bracket(b, BracketNode::generator(i)));
            }
        for (const auto& b : next) {
            if (res.rank == n)
                break;
            offer(b);
        }
        if (res.rank == n) {
            res.depth = depth;
            return res;
        }
        level = std::move(next);
    }
    return res;
}

ConditionReport check_condition(const HormanderSystem& sys, const Domain& domain, int samples,
                                int max_depth)
{
    if (samples < 1)
        throw std::invalid_argument("check_condition: samples must be >= 1");
    const int n = sys.dim();
    if (domain.dim() != n)
        throw std::invalid_argument("check_condition: domain dimension mismatch");
    std::vector<double> lo(n), hi(n);
    for (int a = 0; a < n; ++a) {
        lo[a] = domain.is_torus() ? 0.0 : -domain.extent()[a];
        hi[a] = domain.extent()[a];
    }

    std::vector<std::vector<double>> pts;
    static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19};
    for (int s = 1; s <= samples; ++s) {
        std::vector<double> x(n);
        for (int a = 0; a < n; ++a) {
            double f = 1.0, r = 0.0;
            for (int i = s; i > 0; i /= primes[a % 8]) {
                f /= primes[a % 8];
                r += f * (i % primes[a % 8]);
            }
            x[a] = lo[a] + r * (hi[a] - lo[a]);
        }
        pts.push_back(std::move(x));
    }
    for (int corner = 0; corner < (1 << n); ++corner) {
        std::vector<double> x(n);
        for (int a = 0; a < n; ++a)
            x[a] = (corner >> a) & 1 ? hi[a] : lo[a];
        pts.push_back(std::move(x));
    }
    std::vector<double> centre(n);
    for (int a = 0; a < n; ++a)
        centre[a] = 0.5 * (lo[a] + hi[a]);
    pts.push_back(centre);

    ConditionReport rep;
    rep.worst_rank = n;
    rep.depth_histogram.assign(max_depth + 2, 0);
    for (const auto& x : pts) {
        const auto r = hormander_rank(sys, x, max_depth);
        ++rep.points;
        rep.worst_rank = std::min(rep.worst_rank, r.rank);
        ++rep.depth_histogram[std::min(r.depth, max_depth + 1)];
        if (r.rank < n) {
            rep.pass = false;
            rep.witnesses.push_back(x);
        } else {
            rep.max_depth_used = std::max(rep.max_depth_used, r.depth);
        }
    }
    return rep;
}

//---------------------------------------------------------------------------//
// Grid operations
//---------------------------------------------------------------------------//

Field sample_function(const ScalarFunction& f, const Domain& domain)
{
    if (f.dim() != domain.dim())
        throw std::invalid_argument("sample_function: dimension mismatch");
    return sample(domain, 1, [&](std::span<const double> x, int) { return f(x); });
}

Field convection_apply(const HormanderSystem& sys, const Field& v, const Field& target)
{
    const Domain& dom = v.domain();
    const int n = sys.dim();
    if (dom.dim() != n || v.components() != n)
        throw std::invalid_argument("convection_apply: v must be an n-vector field of the system");
    if (target.domain() != dom)
        throw std::invalid_argument("convection_apply: target lives on another domain");
    Field out(dom, target.components());
    for (int j = 0; j < n; ++j) {
        Field w = v.extract(j);
        if (!equals_constant(sys.B()[j], 1.0)) {
            Field b = sample_function(sys.B()[j], dom);
            for (std::size_t p = 0; p < dom.size(); ++p)
                w.data()[p] *= b.data()[p];
        }
        for (int c = 0; c < target.components(); ++c) {
            Field dt = derivative(target.extract(c), j, 1);
            auto o = out.component(c);
            for (std::size_t p = 0; p < dom.size(); ++p)
                o[p] += w.data()[p] * dt.data()[p];
        }
    }
    return out;
}

CBEstimate estimate_CB(const HormanderSystem& sys, const Domain& domain, int m_order)
{
    if (m_order < 0 || m_order > derivative_budget)
        throw std::invalid_argument("estimate_CB: m_order must lie in [0, 4]");
    const int n = sys.dim();
    const auto alphas = multi_indices(n, m_order);
    std::vector<double> x(n);
    auto sup = [&](const ScalarFunction& f, const std::vector<int>& alpha) {
        double s = 0.0;
        for (std::size_t p = 0; p < domain.size(); ++p) {
            domain.point(p, x);
            s = std::max(s, std::abs(f.derivative(x, alpha)));
        }
        return s;
    };
    CBEstimate est;
    est.C_ij = Eigen::MatrixXd::Zero(n, n);
    for (const auto& alpha : alphas) {
        double worst = 0.0;
        for (int i = 0; i < n; ++i)
            worst = std::max(worst, sup(sys.B()[i], alpha));
        est.C_B += worst;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                est.C_ij(i, j) += sup(sys.c()[i][j], alpha);
    }
    return est;
}

} // namespace nslab
