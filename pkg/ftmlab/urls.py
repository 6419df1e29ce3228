"""
URL configuration for ftmlab project.

The simulator is driven from management commands; the only web surface is the
admin, where persisted experiment runs can be browsed.
"""
from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
