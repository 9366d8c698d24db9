from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(choices=[('populate_memory', 'Populate Memory'), ('train_oae', 'Train Estimator'), ('train', 'Train Policy'), ('eval', 'Evaluate Agent'), ('transfer', 'Cross-Game Transfer'), ('table', 'Comparison Grid')], help_text='Harness command that produced this run', max_length=20)),
                ('status', models.CharField(choices=[('PENDING', 'Pending'), ('RUNNING', 'Running'), ('COMPLETED', 'Completed'), ('FAILED', 'Failed')], default='PENDING', help_text='Current lifecycle status', max_length=20)),
                ('game', models.CharField(help_text='Game the run was played on', max_length=100)),
                ('pathway', models.CharField(blank=True, help_text='Policy pathway id (blank for memory and estimator runs)', max_length=20)),
                ('oae_mode', models.CharField(blank=True, help_text='Estimator mode, when an estimator is involved', max_length=20)),
                ('seed', models.PositiveBigIntegerField(blank=True, help_text='Master seed (null when it exceeds the column range; see config)', null=True)),
                ('config', models.JSONField(blank=True, default=dict, help_text='Fully resolved experiment configuration')),
                ('output_dir', models.CharField(blank=True, help_text="Directory holding the run's files", max_length=500)),
                ('checkpoint_hash', models.CharField(blank=True, help_text='SHA256 fingerprint of the produced agent or estimator', max_length=64)),
                ('oae_hash', models.CharField(blank=True, help_text='SHA256 fingerprint of the frozen estimator used', max_length=64)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('started_at', models.DateTimeField(blank=True, help_text='When the harness call began', null=True)),
                ('completed_at', models.DateTimeField(blank=True, help_text='When the harness call finished (success or failure)', null=True)),
                ('error_log', models.JSONField(blank=True, default=dict, help_text='Errors raised while the run was executing')),
                ('notes', models.TextField(blank=True, help_text='Free-form notes')),
            ],
            options={
                'verbose_name': 'Experiment Run',
                'verbose_name_plural': 'Experiment Runs',
                'db_table': 'experiment_runs',
                'ordering': ['-created_at'],
                'indexes': [
                    models.Index(fields=['status', 'created_at'], name='run_status_created_idx'),
                    models.Index(fields=['command', 'created_at'], name='run_command_created_idx'),
                    models.Index(fields=['game', 'pathway'], name='run_game_pathway_idx'),
                ],
            },
        ),
        migrations.CreateModel(
            name='EvaluationResult',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('pathway', models.CharField(help_text='Policy pathway id', max_length=20)),
                ('pool', models.CharField(choices=[('old', 'Old Strategies'), ('new', 'New Strategies')], help_text='Opponent pool evaluated against', max_length=3)),
                ('mean_delta_r', models.FloatField(help_text='Mean score difference over the evaluation games')),
                ('stderr', models.FloatField(help_text='Standard error of the mean score difference')),
                ('games', models.PositiveIntegerField(help_text='Evaluation games counted')),
                ('seed', models.PositiveBigIntegerField(blank=True, help_text='Master seed of the run', null=True)),
                ('game', models.CharField(help_text='Game evaluated on', max_length=100)),
                ('epoch', models.PositiveIntegerField(default=0, help_text='Training epoch of the evaluation block')),
                ('variant', models.CharField(blank=True, help_text='Estimator provenance for transfer rows (new_trained or reused)', max_length=20)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(help_text='Run that produced this row', on_delete=django.db.models.deletion.CASCADE, related_name='results', to='experiments.experimentrun')),
            ],
            options={
                'verbose_name': 'Evaluation Result',
                'verbose_name_plural': 'Evaluation Results',
                'db_table': 'evaluation_results',
                'ordering': ['run', 'epoch', 'pathway', 'pool'],
                'indexes': [
                    models.Index(fields=['game', 'pathway', 'pool'], name='result_game_pathway_pool_idx'),
                    models.Index(fields=['run', 'epoch'], name='result_run_epoch_idx'),
                ],
            },
        ),
    ]
