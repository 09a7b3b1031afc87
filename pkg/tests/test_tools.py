from tools.discriminator_grid_table import grid_table, main


def test_grid_table_matches_the_network():
    rows = grid_table(sides=(64, 128), base_channels=4)
    assert [(row['side'], row['predicted']) for row in rows] == [(64, 6), (128, 14)]
    assert all(row['predicted'] == row['measured'] for row in rows)
    assert {row['receptive_field'] for row in rows} == {70}


def test_grid_table_script_reports_success(capsys):
    assert main() == 0
    assert 'matches the network' in capsys.readouterr().out
