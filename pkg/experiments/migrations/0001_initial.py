from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(help_text='Management command that was run (e.g., prepare, train, eval)', max_length=50)),
                ('status', models.CharField(choices=[('running', 'Running'), ('succeeded', 'Succeeded'), ('failed', 'Failed')], default='running', help_text='Current status of the run', max_length=10)),
                ('config', models.JSONField(default=dict, help_text='Effective configuration of the run')),
                ('metrics', models.JSONField(blank=True, default=dict, help_text='Metrics reported by the run')),
                ('preparation_seconds', models.FloatField(blank=True, help_text='Wall time spent preparing neighbor targets', null=True)),
                ('training_seconds', models.FloatField(blank=True, help_text='Wall time spent training', null=True)),
                ('error_message', models.TextField(blank=True, help_text='Error message if the run failed')),
                ('created_at', models.DateTimeField(auto_now_add=True, help_text='When the run started')),
                ('completed_at', models.DateTimeField(blank=True, help_text='When the run finished', null=True)),
            ],
            options={
                'verbose_name': 'Experiment Run',
                'verbose_name_plural': 'Experiment Runs',
                'ordering': ['-created_at'],
                'indexes': [
                    models.Index(fields=['command', 'created_at'], name='experiments_command_0f5d2c_idx'),
                    models.Index(fields=['status'], name='experiments_status_8a1e4b_idx'),
                ],
            },
        ),
    ]
