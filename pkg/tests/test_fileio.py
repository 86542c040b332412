import numpy as np
import pytest

from market_eq import GeneratorConfig, ParseError, generate_exchange, generate_fisher, load, save
from market_eq.errors import StructureError
from market_eq.fileio import read_matrix_market, write_matrix_market


@pytest.mark.parametrize("fmt", ["mtx", "csv"])
def test_round_trip_fisher(tmp_path, fmt):
    inst = generate_fisher(GeneratorConfig(n=10, m=5, sparsity_u=0.6, seed=21))
    save(inst, str(tmp_path / "inst"), fmt=fmt)
    again = load(str(tmp_path / "inst"), fmt=fmt)
    assert again == inst


@pytest.mark.parametrize("fmt", ["mtx", "csv"])
def test_round_trip_exchange(tmp_path, fmt):
    inst = generate_exchange(GeneratorConfig(n=8, m=4, sparsity_u=0.7,
                                             sparsity_e=0.9, seed=2))
    save(inst, str(tmp_path / "ex"), fmt=fmt)
    again = load(str(tmp_path / "ex"), fmt=fmt)
    assert again == inst


def test_matrix_market_wrong_nnz(tmp_path):
    path = tmp_path / "bad.mtx"
    path.write_text("%%MatrixMarket matrix coordinate real general\n"
                    "2 2 3\n1 1 0.5\n2 2 0.25\n")
    with pytest.raises(ParseError) as err:
        read_matrix_market(str(path))
    assert "declared 3" in str(err.value)


def test_matrix_market_bad_entry_has_line_number(tmp_path):
    path = tmp_path / "bad.mtx"
    path.write_text("%%MatrixMarket matrix coordinate real general\n"
                    "2 2 2\n1 1 0.5\n2 oops 0.25\n")
    with pytest.raises(ParseError) as err:
        read_matrix_market(str(path))
    assert err.value.line == 4


def test_csv_negative_value_rejected(tmp_path):
    path = tmp_path / "bad.u.csv"
    path.write_text("2,2,2\n0,0,0.5\n1,1,-0.25\n")
    (tmp_path / "bad.w.txt").write_text("1.0\n1.0\n")
    with pytest.raises(ParseError) as err:
        load(str(tmp_path / "bad"), fmt="csv")
    assert "negative" in str(err.value)
    assert err.value.line == 3


def test_budget_dimension_mismatch(tmp_path):
    inst = generate_fisher(GeneratorConfig(n=4, m=3, sparsity_u=0.9, seed=0))
    save(inst, str(tmp_path / "inst"))
    (tmp_path / "inst.w.txt").write_text("1.0\n2.0\n")
    with pytest.raises(StructureError):
        load(str(tmp_path / "inst"))


def test_mtx_header_enforced(tmp_path):
    path = tmp_path / "x.mtx"
    path.write_text("1 1 1\n1 1 1.0\n")
    with pytest.raises(ParseError) as err:
        read_matrix_market(str(path))
    assert err.value.line == 1


def test_values_survive_exactly(tmp_path):
    # 17 significant digits reproduce doubles bit for bit
    rng = np.random.default_rng(5)
    inst = generate_fisher(GeneratorConfig(n=6, m=6, sparsity_u=0.5, seed=13))
    save(inst, str(tmp_path / "f"))
    again = load(str(tmp_path / "f"))
    assert np.array_equal(again.utilities.values, inst.utilities.values)
    assert np.array_equal(again.budgets, inst.budgets)


def test_one_based_indices_in_mtx(tmp_path):
    inst = generate_fisher(GeneratorConfig(n=3, m=3, sparsity_u=1.0, seed=0))
    write_matrix_market(inst.utilities, str(tmp_path / "u.mtx"))
    lines = (tmp_path / "u.mtx").read_text().splitlines()
    first_entry = lines[2].split()
    assert first_entry[0] == "1" and first_entry[1] == "1"
