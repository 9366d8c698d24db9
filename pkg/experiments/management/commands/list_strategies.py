"""
Print the strategy library and the old/new pool split.

Usage:
    python manage.py list_strategies
    python manage.py list_strategies --pool-file pools/custom.yaml
"""

from django.core.management.base import BaseCommand, CommandError

from services.exceptions import AdaptLabError
from services.strategies import CATALOG, load_pool


class Command(BaseCommand):
    help = 'List every built-in opponent strategy and the pool it belongs to'

    def add_arguments(self, parser):
        parser.add_argument('--pool-file', help='YAML strategy pool with old/new id lists')

    def handle(self, *args, **options):
        try:
            pool = load_pool(options.get('pool_file'))
        except (AdaptLabError, OSError) as exc:
            raise CommandError(str(exc)) from exc

        width = max(len(strategy_id) for strategy_id in CATALOG)
        for strategy_id, strategy in CATALOG.items():
            membership = 'old' if strategy_id in pool.old else 'new' if strategy_id in pool.new else '-'
            marker = ' (stochastic)' if strategy.stochastic else ''
            self.stdout.write(f"{strategy_id.ljust(width)}  {membership:<3}  {strategy.name}{marker}")
        self.stdout.write(f"\nold: {len(pool.old)} strategies, new: {len(pool.new)} strategies")
