# Generated by Django 5.2.5 on 2026-10-18 10:12

import django.db.models.deletion
import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('name', models.CharField(max_length=100)),
                ('command', models.CharField(choices=[('simulate', 'Simulate scenario'), ('reproduce_fig4', 'Room experiment'), ('compare', 'Technology comparison')], default='simulate', max_length=20)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=20)),
                ('seed', models.CharField(default='0', max_length=20)),
                ('repetitions', models.PositiveIntegerField(default=1)),
                ('legacy_mismatch', models.BooleanField(default=False)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('summary', models.JSONField(blank=True, default=dict)),
                ('csv_path', models.CharField(blank=True, max_length=500)),
                ('error_message', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='RstaSample',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('rsta_label', models.CharField(max_length=100)),
                ('repetition', models.PositiveIntegerField()),
                ('aoa_error_deg', models.FloatField()),
                ('position_error_cm', models.FloatField()),
                ('distance_error_cm', models.FloatField()),
                ('los_likelihood', models.FloatField()),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='samples', to='positioning.experimentrun')),
            ],
            options={
                'ordering': ['rsta_label', 'repetition'],
                'constraints': [models.UniqueConstraint(fields=('run', 'rsta_label', 'repetition'), name='unique_rsta_sample')],
            },
        ),
    ]
